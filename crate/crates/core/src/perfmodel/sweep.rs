//! Compute time against channel count for two architectures.
//!
//! The related design tiles every kernel into 3x3 pieces, so its kernel term
//! is `ceil(X/3) * ceil(Y/3) * 9` where ours is `X * Y`. Everything else
//! reuses the compute skeleton of the timing equations. This is an
//! approximation; the related design's own equations are not available.

use super::{layer_times, HardwareConfig};
use crate::error::{Error, Result};
use crate::netir::{ConvKind, LayerSpec};

pub const APPROXIMATE_NOTE: &str =
    "related-work times are approximate: 3x3 tiled kernel term on the proposed compute skeleton";

/// Kernel term of the tiled design.
pub fn related_kernel_term(x: usize, y: usize) -> u64 {
    (x.div_ceil(3) * y.div_ceil(3) * 9) as u64
}

/// Compute cycles per block of `layer` on the tiled design.
pub fn related_compute_time(layer: &LayerSpec, hw: &HardwareConfig) -> Result<u64> {
    let kind = layer
        .conv_kind()
        .ok_or_else(|| Error::Contract("related timing needs a convolution".into()))?;
    let kernel = related_kernel_term(layer.kernel_x, layer.kernel_y);
    let passes = hw.out_block.pixels().div_ceil(hw.mac_pe) as u64;
    let groups = layer.out_channels.div_ceil(hw.pe_num) as u64;
    let ic = if kind == ConvKind::Depthwise { 1 } else { layer.in_channels as u64 };
    Ok(kernel * ic * passes * groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub channels: usize,
    pub t_proposed: u64,
    pub t_related: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepTable {
    pub kind: ConvKind,
    pub kernel_x: usize,
    pub kernel_y: usize,
    pub points: Vec<SweepPoint>,
    pub note: &'static str,
}

/// Compute time per block with IC = OC = channels at every point.
pub fn comparison_sweep(
    hw_proposed: &HardwareConfig,
    hw_related: &HardwareConfig,
    kind: ConvKind,
    x: usize,
    y: usize,
    channels: &[usize],
) -> Result<SweepTable> {
    if channels.is_empty() {
        return Err(Error::InvalidArgument("empty channel range".into()));
    }
    hw_proposed.validate()?;
    hw_related.validate()?;
    let points = channels
        .iter()
        .map(|&c| {
            if c == 0 {
                return Err(Error::InvalidArgument("channel counts must be positive".into()));
            }
            let layer = match kind {
                ConvKind::Depthwise => LayerSpec::depthwise(c, x, y),
                _ => LayerSpec::conv(c, c, x, y),
            };
            Ok(SweepPoint {
                channels: c,
                t_proposed: layer_times(&layer, hw_proposed)?.t_comp,
                t_related: related_compute_time(&layer, hw_related)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        kind,
        kernel_x: x,
        kernel_y: y,
        points,
        note: APPROXIMATE_NOTE,
    })
}

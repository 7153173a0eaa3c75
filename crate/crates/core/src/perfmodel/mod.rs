//! Analytical timing model.
//!
//! Each layer is processed one spatial block at a time. For one block,
//! feature maps and weights stream over separate ports in parallel with
//! computation, so the block takes `max(t_mem, t_comp)` cycles:
//!
//! regular:
//!   t_mem  = max(IC * ceil(IN*IM / BW_FM) * ceil(OC / PE), IC * OC * ceil(X*Y / BW_W))
//!   t_comp = X*Y * IC * ceil(ON*OM / MAC_PE) * ceil(OC / PE)
//!
//! depthwise:
//!   t_mem  = max(OC * ceil(IN*IM / BW_FM), OC * ceil(X*Y / BW_W))
//!   t_comp = X*Y * ceil(ON*OM / MAC_PE) * ceil(OC / PE)
//!
//! Compute time depends on the number of taps, not on the dilated extent.

mod hardware;
mod sweep;
mod utilization;

pub use hardware::{BlockSize, HardwareConfig, WeightFetch};
pub use sweep::{comparison_sweep, related_compute_time, related_kernel_term, SweepPoint, SweepTable};
pub use utilization::{percent, utilization, ArchModel};

use crate::error::{Error, Result};
use crate::netir::{CompositeNetwork, ConvKind, LayerSpec, NetworkSpec, TensorShape};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    MemoryBound,
    ComputeBound,
    Balanced,
}

impl Bound {
    fn classify(t_mem: u64, t_comp: u64) -> Self {
        match t_mem.cmp(&t_comp) {
            std::cmp::Ordering::Greater => Bound::MemoryBound,
            std::cmp::Ordering::Less => Bound::ComputeBound,
            std::cmp::Ordering::Equal => Bound::Balanced,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Bound::MemoryBound => "memory",
            Bound::ComputeBound => "compute",
            Bound::Balanced => "balanced",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label {
            "memory" => Some(Bound::MemoryBound),
            "compute" => Some(Bound::ComputeBound),
            "balanced" => Some(Bound::Balanced),
            _ => None,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-block cycle counts of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerTiming {
    pub kind: ConvKind,
    /// Feature-map transfer term of `t_mem`.
    pub feature_cycles: u64,
    /// Weight transfer term of `t_mem`.
    pub weight_cycles: u64,
    pub t_mem: u64,
    pub t_comp: u64,
    pub t_layer: u64,
    pub bound: Bound,
    /// Output-channel groups of `pe_num` channels.
    pub groups: u64,
}

impl LayerTiming {
    fn new(kind: ConvKind, feature_cycles: u64, weight_cycles: u64, t_comp: u64, groups: u64) -> Self {
        let t_mem = feature_cycles.max(weight_cycles);
        Self {
            kind,
            feature_cycles,
            weight_cycles,
            t_mem,
            t_comp,
            t_layer: t_mem.max(t_comp),
            bound: Bound::classify(t_mem, t_comp),
            groups,
        }
    }
}

fn ceil_div(a: usize, b: usize) -> u64 {
    a.div_ceil(b) as u64
}

/// Timing of a regular (or pointwise) convolution for one block.
pub fn regular_layer_times(layer: &LayerSpec, hw: &HardwareConfig) -> Result<LayerTiming> {
    let kind = layer
        .conv_kind()
        .filter(|k| k.is_regular())
        .ok_or_else(|| {
            Error::Contract(format!(
                "regular timing requested for a {} layer",
                layer.kind.label()
            ))
        })?;
    let input = hw.input_block(layer);
    let (ic, oc, taps) = (layer.in_channels as u64, layer.out_channels as u64, layer.taps() as u64);
    let groups = ceil_div(layer.out_channels, hw.pe_num);
    let feature = ic * ceil_div(input.pixels(), hw.bw_fm) * groups;
    let weight = ic * oc * ceil_div(layer.taps(), hw.bw_w);
    let comp = taps * ic * ceil_div(hw.out_block.pixels(), hw.mac_pe) * groups;
    Ok(LayerTiming::new(kind, feature, weight, comp, groups))
}

/// Timing of a depthwise convolution for one block.
pub fn depthwise_layer_times(layer: &LayerSpec, hw: &HardwareConfig) -> Result<LayerTiming> {
    if layer.conv_kind() != Some(ConvKind::Depthwise) {
        return Err(Error::Contract(format!(
            "depthwise timing requested for a {} layer",
            layer.kind.label()
        )));
    }
    let input = hw.input_block(layer);
    let oc = layer.out_channels as u64;
    let groups = ceil_div(layer.out_channels, hw.pe_num);
    let feature = oc * ceil_div(input.pixels(), hw.bw_fm);
    let weight = oc * ceil_div(layer.taps(), hw.bw_w);
    let comp = layer.taps() as u64 * ceil_div(hw.out_block.pixels(), hw.mac_pe) * groups;
    Ok(LayerTiming::new(ConvKind::Depthwise, feature, weight, comp, groups))
}

/// Dispatches on the layer's convolution kind.
pub fn layer_times(layer: &LayerSpec, hw: &HardwareConfig) -> Result<LayerTiming> {
    match layer.conv_kind() {
        Some(ConvKind::Depthwise) => depthwise_layer_times(layer, hw),
        Some(_) => regular_layer_times(layer, hw),
        None => Err(Error::Contract(format!(
            "{} layers have no convolution timing",
            layer.kind.label()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub segment: Option<String>,
    pub layer: usize,
    pub label: &'static str,
    /// `None` for activation and pooling layers.
    pub timing: Option<LayerTiming>,
    pub blocks: u64,
    pub total: u64,
}

impl LayerReport {
    pub fn id(&self) -> String {
        match &self.segment {
            Some(seg) => format!("{seg}:{}", self.layer),
            None => self.layer.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub name: String,
    pub per_layer: Vec<LayerReport>,
    pub total_cycles: u64,
    pub clock_hz: u64,
    /// Accelerator-only frame rate; `None` for an empty network.
    pub fps: Option<f64>,
    pub notes: Vec<String>,
}

pub const FPS_NOTE: &str =
    "fps covers accelerator cycles only; host-side post-processing is not modeled";

/// Cycles for `net` on one frame. `frame` replaces the network input when
/// given and must keep its channel count.
pub fn network_time(
    net: &NetworkSpec,
    hw: &HardwareConfig,
    frame: Option<TensorShape>,
) -> Result<TimingReport> {
    let net = match frame {
        Some(frame) if frame != net.input_shape() => net.with_input(frame)?,
        _ => net.clone(),
    };
    let mut report = composite_network_time(&CompositeNetwork::from_single(&net), hw)?;
    for row in &mut report.per_layer {
        row.segment = None;
    }
    Ok(report)
}

pub fn composite_network_time(net: &CompositeNetwork, hw: &HardwareConfig) -> Result<TimingReport> {
    hw.validate()?;
    hw.check_frame(net.input_shape())?;
    let mut per_layer = Vec::new();
    let mut notes = Vec::new();
    let mut total_cycles = 0u64;
    for account in net.accounts().into_iter().filter(|a| a.computed) {
        let seg = &net.segments()[account.segment];
        let layer = &seg.network.layers()[account.layer];
        hw.check_kernel(account.layer, layer)?;
        let blocks = hw.blocks(seg.network.layer_output(account.layer));
        let (timing, total) = if layer.is_conv() {
            let timing = layer_times(layer, hw)?;
            let total = match hw.weight_fetch {
                WeightFetch::PerBlock => blocks * timing.t_layer,
                WeightFetch::Once => (blocks * timing.feature_cycles)
                    .max(timing.weight_cycles)
                    .max(blocks * timing.t_comp),
            };
            let weight_bytes = crate::costmodel::layer_weights(layer);
            if account.weights_counted && weight_bytes > hw.w_memory_bytes {
                notes.push(format!(
                    "{}:{}: {weight_bytes} weight bytes exceed weight memory",
                    seg.name, account.layer
                ));
            }
            (Some(timing), total)
        } else {
            (None, blocks * hw.aplpu_latency)
        };
        total_cycles += total;
        per_layer.push(LayerReport {
            segment: Some(seg.name.clone()),
            layer: account.layer,
            label: layer.kind.label(),
            timing,
            blocks,
            total,
        });
    }
    let fps = (total_cycles > 0).then(|| hw.clock_hz as f64 / total_cycles as f64);
    notes.push(FPS_NOTE.to_string());
    Ok(TimingReport {
        name: net.name().to_string(),
        per_layer,
        total_cycles,
        clock_hz: hw.clock_hz,
        fps,
        notes,
    })
}

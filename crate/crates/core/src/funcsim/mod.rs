//! Bit-exact int8 reference.
//!
//! Tensors hold 8-bit integers with a power-of-two scale: the real value of
//! element `q` is `q * 2^scale_exponent`. Convolutions accumulate in 32-bit
//! integers without saturation; the accumulator exponent is the sum of the
//! input and weight exponents. Requantization rounds half away from zero and
//! saturates to the int8 range.

mod conv;
mod io;
mod network;

pub use conv::{conv_blocked, conv_blocked_with_fault, conv_oracle, max_pool, Fault};
pub use io::{
    parse_weight_descriptor, read_tensor, read_weights, weight_descriptor, write_tensor,
    write_weights,
};
pub use network::{
    compare_orders, random_params, random_tensor, run_network, run_network_traced, LayerParams,
    Mismatch, NetworkParams, Order, RunTrace,
};

use crate::error::{Error, Result};
use crate::netir::{ConvKind, LayerSpec, TensorShape};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTensor {
    pub shape: TensorShape,
    /// Channels-first.
    pub data: Vec<i8>,
    pub scale_exponent: i32,
}

impl QuantTensor {
    pub fn new(shape: TensorShape, data: Vec<i8>, scale_exponent: i32) -> Result<Self> {
        if data.len() != shape.elements() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {shape} tensor",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            scale_exponent,
        })
    }

    pub fn zeros(shape: TensorShape, scale_exponent: i32) -> Self {
        Self {
            shape,
            data: vec![0; shape.elements()],
            scale_exponent,
        }
    }

    pub fn random<R: Rng>(shape: TensorShape, scale_exponent: i32, rng: &mut R) -> Self {
        let data = (0..shape.elements()).map(|_| rng.gen()).collect();
        Self {
            shape,
            data,
            scale_exponent,
        }
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> i8 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightLayout {
    /// `[OC][IC][Y][X]`
    Regular { oc: usize, ic: usize, ky: usize, kx: usize },
    /// `[OC][Y][X]`
    Depthwise { oc: usize, ky: usize, kx: usize },
}

impl WeightLayout {
    /// Layout for a convolution layer; `None` for other layer kinds.
    pub fn for_layer(layer: &LayerSpec) -> Option<Self> {
        let (ky, kx) = (layer.kernel_y, layer.kernel_x);
        match layer.conv_kind()? {
            ConvKind::Depthwise => Some(Self::Depthwise {
                oc: layer.out_channels,
                ky,
                kx,
            }),
            _ => Some(Self::Regular {
                oc: layer.out_channels,
                ic: layer.in_channels,
                ky,
                kx,
            }),
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Self::Regular { oc, ic, ky, kx } => oc * ic * ky * kx,
            Self::Depthwise { oc, ky, kx } => oc * ky * kx,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantWeights {
    pub layout: WeightLayout,
    pub data: Vec<i8>,
    pub scale_exponent: i32,
}

impl QuantWeights {
    pub fn new(layout: WeightLayout, data: Vec<i8>, scale_exponent: i32) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for layout {layout:?}",
                data.len()
            )));
        }
        Ok(Self {
            layout,
            data,
            scale_exponent,
        })
    }

    pub fn random<R: Rng>(layer: &LayerSpec, scale_exponent: i32, rng: &mut R) -> Result<Self> {
        let layout = WeightLayout::for_layer(layer)
            .ok_or_else(|| Error::Contract("weights requested for a non-convolution layer".into()))?;
        let data = (0..layout.len()).map(|_| rng.gen()).collect();
        Self::new(layout, data, scale_exponent)
    }

    /// Weight for output channel `o`, input channel `i` (ignored for
    /// depthwise) and tap `(ky, kx)`.
    pub fn at(&self, o: usize, i: usize, ky: usize, kx: usize) -> i8 {
        match self.layout {
            WeightLayout::Regular { ic, ky: h, kx: w, .. } => {
                self.data[((o * ic + i) * h + ky) * w + kx]
            }
            WeightLayout::Depthwise { ky: h, kx: w, .. } => self.data[(o * h + ky) * w + kx],
        }
    }
}

/// 32-bit accumulators, channels-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccTensor {
    pub shape: TensorShape,
    pub data: Vec<i32>,
    pub scale_exponent: i32,
}

impl AccTensor {
    pub fn get(&self, c: usize, y: usize, x: usize) -> i32 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    /// Coordinates `(c, y, x)` of a flat index.
    pub fn coordinate(&self, index: usize) -> (usize, usize, usize) {
        let plane = self.shape.pixels();
        (
            index / plane,
            index % plane / self.shape.width,
            index % self.shape.width,
        )
    }
}

pub fn relu(acc: &AccTensor) -> AccTensor {
    AccTensor {
        data: acc.data.iter().map(|&v| v.max(0)).collect(),
        ..acc.clone()
    }
}

/// Rescales `value` by `2^-shift`: right shifts round half away from zero,
/// left shifts saturate; the result is clamped to int8.
pub fn requantize_value(value: i64, shift: i32) -> i8 {
    let scaled = if shift > 0 {
        if shift >= 63 {
            0
        } else {
            let half = 1i64 << (shift - 1);
            let magnitude = (value.unsigned_abs() as i64 + half) >> shift;
            if value < 0 {
                -magnitude
            } else {
                magnitude
            }
        }
    } else {
        let left = (-shift).min(62) as u32;
        value.saturating_mul(1i64 << left)
    };
    scaled.clamp(i8::MIN as i64, i8::MAX as i64) as i8
}

/// Converts accumulators to int8 at `out_scale_exponent`. The right shift is
/// `out_scale_exponent - acc.scale_exponent`.
pub fn requantize(acc: &AccTensor, out_scale_exponent: i32) -> QuantTensor {
    let shift = out_scale_exponent - acc.scale_exponent;
    QuantTensor {
        shape: acc.shape,
        data: acc.data.iter().map(|&v| requantize_value(v as i64, shift)).collect(),
        scale_exponent: out_scale_exponent,
    }
}

pub fn relu_quantize(acc: &AccTensor, out_scale_exponent: i32) -> QuantTensor {
    requantize(&relu(acc), out_scale_exponent)
}

/// Smallest exponent at or above the accumulator's that keeps every value
/// unsaturated.
pub fn auto_exponent(acc: &AccTensor) -> i32 {
    let hi = acc.data.iter().copied().max().unwrap_or(0) as i64;
    let lo = acc.data.iter().copied().min().unwrap_or(0) as i64;
    let mut shift = 0;
    while requantize_value(hi, shift) as i64 != round_shift(hi, shift)
        || requantize_value(lo, shift) as i64 != round_shift(lo, shift)
    {
        shift += 1;
    }
    acc.scale_exponent + shift
}

fn round_shift(value: i64, shift: i32) -> i64 {
    if shift == 0 {
        return value;
    }
    let half = 1i64 << (shift - 1);
    let magnitude = (value.abs() + half) >> shift;
    value.signum() * magnitude
}

//! Network intermediate representation.
//!
//! A [`NetworkSpec`] is a strictly sequential list of layers applied to a
//! channels-first input tensor. Construction validates channel chaining and
//! spatial shape inference, so every value of the type is well formed and
//! immutable afterwards.
//!
//! Dilation follows the "gaps between taps" convention: a kernel of `k` taps
//! with dilation `d` spans `k + (k - 1) * d` pixels, so `d = 0` is a dense
//! kernel. Frameworks that count the tap spacing instead use `d + 1`.

mod composite;
mod format;

pub use composite::{CompositeNetwork, LayerAccount, Model, Segment, SharedPrefix};
pub use format::{composite_to_json, parse_layer, parse_model, parse_network, to_json};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Channels-first tensor shape. All fields are at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl TensorShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn elements(&self) -> usize {
        self.channels * self.pixels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidNetwork(format!(
                "tensor shape {self} has a zero dimension"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvKind {
    Regular,
    Depthwise,
    /// A regular 1x1 convolution. Kept as a separate label for reporting only.
    Pointwise,
}

impl ConvKind {
    /// True for kinds that accumulate across input channels.
    pub fn is_regular(self) -> bool {
        matches!(self, ConvKind::Regular | ConvKind::Pointwise)
    }

    pub fn label(self) -> &'static str {
        match self {
            ConvKind::Regular => "regular",
            ConvKind::Depthwise => "depthwise",
            ConvKind::Pointwise => "pointwise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationFn {
    Relu,
    Quantize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv(ConvKind),
    Activation(ActivationFn),
    /// Max pooling; only its window and stride matter to the models.
    Pool,
}

impl LayerKind {
    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::Conv(kind) => kind.label(),
            LayerKind::Activation(ActivationFn::Relu) => "relu",
            LayerKind::Activation(ActivationFn::Quantize) => "quantize",
            LayerKind::Pool => "pool",
        }
    }
}

/// Explicit zero padding in pixels on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Self {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.top == self.bottom && self.top == self.left && self.top == self.right
    }

    /// Padding that yields `ceil(input / stride)` outputs per axis.
    pub fn same(input: TensorShape, extent_y: usize, extent_x: usize, stride: usize) -> Self {
        fn split(len: usize, extent: usize, stride: usize) -> (usize, usize) {
            let out = len.div_ceil(stride);
            let total = ((out - 1) * stride + extent).saturating_sub(len);
            (total / 2, total - total / 2)
        }
        let (top, bottom) = split(input.height, extent_y, stride);
        let (left, right) = split(input.width, extent_x, stride);
        Self {
            top,
            bottom,
            left,
            right,
        }
    }
}

/// One layer of a sequential network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_x: usize,
    pub kernel_y: usize,
    /// Zero gaps inserted between adjacent taps.
    pub dilation: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl LayerSpec {
    /// Regular convolution; a 1x1 kernel is labelled [`ConvKind::Pointwise`].
    pub fn conv(in_channels: usize, out_channels: usize, kernel_x: usize, kernel_y: usize) -> Self {
        let kind = if kernel_x == 1 && kernel_y == 1 {
            ConvKind::Pointwise
        } else {
            ConvKind::Regular
        };
        Self {
            kind: LayerKind::Conv(kind),
            in_channels,
            out_channels,
            kernel_x,
            kernel_y,
            dilation: 0,
            stride: 1,
            padding: Padding::default(),
        }
    }

    pub fn depthwise(channels: usize, kernel_x: usize, kernel_y: usize) -> Self {
        Self {
            kind: LayerKind::Conv(ConvKind::Depthwise),
            ..Self::conv(channels, channels, kernel_x, kernel_y)
        }
    }

    pub fn activation(channels: usize, act: ActivationFn) -> Self {
        Self {
            kind: LayerKind::Activation(act),
            ..Self::conv(channels, channels, 1, 1)
        }
    }

    pub fn pool(channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Pool,
            stride,
            ..Self::conv(channels, channels, kernel, kernel)
        }
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_pad(self, pad: usize) -> Self {
        self.with_padding(Padding::uniform(pad))
    }

    pub fn conv_kind(&self) -> Option<ConvKind> {
        match self.kind {
            LayerKind::Conv(kind) => Some(kind),
            _ => None,
        }
    }

    pub fn is_conv(&self) -> bool {
        self.conv_kind().is_some()
    }

    pub fn is_activation(&self) -> bool {
        matches!(self.kind, LayerKind::Activation(_))
    }

    /// Nonzero taps per output value per input channel.
    pub fn taps(&self) -> usize {
        self.kernel_x * self.kernel_y
    }

    pub fn extent_x(&self) -> usize {
        self.kernel_x + (self.kernel_x - 1) * self.dilation
    }

    pub fn extent_y(&self) -> usize {
        self.kernel_y + (self.kernel_y - 1) * self.dilation
    }

    /// Output shape for `input`, or an error naming what went wrong.
    pub fn output_shape(&self, input: TensorShape) -> std::result::Result<TensorShape, String> {
        if input.channels != self.in_channels {
            return Err(format!(
                "expects {} input channels but receives {}",
                self.in_channels, input.channels
            ));
        }
        let axis = |len: usize, before: usize, after: usize, extent: usize, name: &str| {
            let padded = len + before + after;
            if extent > padded {
                Err(format!(
                    "kernel extent {extent} exceeds padded {name} {padded}"
                ))
            } else {
                Ok((padded - extent) / self.stride + 1)
            }
        };
        let height = axis(
            input.height,
            self.padding.top,
            self.padding.bottom,
            self.extent_y(),
            "height",
        )?;
        let width = axis(
            input.width,
            self.padding.left,
            self.padding.right,
            self.extent_x(),
            "width",
        )?;
        Ok(TensorShape::new(self.out_channels, height, width))
    }

    fn check(&self, index: usize) -> Result<Self> {
        let mut layer = *self;
        if layer.in_channels == 0 || layer.out_channels == 0 {
            return Err(Error::layer(index, "channel counts must be at least 1"));
        }
        if layer.kernel_x == 0 || layer.kernel_y == 0 {
            return Err(Error::layer(index, "kernel size must be at least 1"));
        }
        if layer.stride == 0 {
            return Err(Error::layer(index, "stride must be at least 1"));
        }
        match layer.kind {
            LayerKind::Conv(ConvKind::Depthwise) => {
                if layer.in_channels != layer.out_channels {
                    return Err(Error::layer(index, "depthwise requires IC == OC"));
                }
            }
            LayerKind::Conv(ConvKind::Pointwise) => {
                if layer.kernel_x != 1 || layer.kernel_y != 1 {
                    return Err(Error::layer(index, "pointwise requires a 1x1 kernel"));
                }
            }
            LayerKind::Conv(ConvKind::Regular) => {
                if layer.kernel_x == 1 && layer.kernel_y == 1 {
                    layer.kind = LayerKind::Conv(ConvKind::Pointwise);
                }
            }
            LayerKind::Activation(_) => {
                if layer.in_channels != layer.out_channels {
                    return Err(Error::layer(index, "activation requires IC == OC"));
                }
                if layer.kernel_x != 1
                    || layer.kernel_y != 1
                    || layer.stride != 1
                    || layer.dilation != 0
                    || layer.padding != Padding::default()
                {
                    return Err(Error::layer(
                        index,
                        "activation layers take no kernel, stride, dilation or padding",
                    ));
                }
            }
            LayerKind::Pool => {
                if layer.in_channels != layer.out_channels {
                    return Err(Error::layer(index, "pooling requires IC == OC"));
                }
                if layer.dilation != 0 {
                    return Err(Error::layer(index, "pooling does not support dilation"));
                }
            }
        }
        Ok(layer)
    }
}

/// Receptive field of one output value, in input pixels per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    pub x: usize,
    pub y: usize,
}

/// A validated sequential network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    name: String,
    input_shape: TensorShape,
    layers: Vec<LayerSpec>,
    /// Tensor shape at each layer boundary; `shapes[0]` is the input.
    shapes: Vec<TensorShape>,
}

impl NetworkSpec {
    pub fn new(
        name: impl Into<String>,
        input_shape: TensorShape,
        layers: Vec<LayerSpec>,
    ) -> Result<Self> {
        input_shape.validate()?;
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input_shape);
        let mut normalized = Vec::with_capacity(layers.len());
        for (index, layer) in layers.iter().enumerate() {
            let layer = layer.check(index)?;
            let current = *shapes.last().unwrap();
            let next = layer
                .output_shape(current)
                .map_err(|message| Error::layer(index, message))?;
            normalized.push(layer);
            shapes.push(next);
        }
        Ok(Self {
            name: name.into(),
            input_shape,
            layers: normalized,
            shapes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> TensorShape {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn output_shape(&self) -> TensorShape {
        *self.shapes.last().unwrap()
    }

    /// Shape entering layer `i`.
    pub fn layer_input(&self, i: usize) -> TensorShape {
        self.shapes[i]
    }

    /// Shape leaving layer `i`.
    pub fn layer_output(&self, i: usize) -> TensorShape {
        self.shapes[i + 1]
    }

    /// Shapes at every layer boundary, input first.
    pub fn infer_shapes(&self) -> Vec<TensorShape> {
        self.shapes.clone()
    }

    /// Same layers applied to a different input.
    pub fn with_input(&self, input_shape: TensorShape) -> Result<Self> {
        Self::new(self.name.clone(), input_shape, self.layers.clone())
    }

    pub fn with_layers(&self, layers: Vec<LayerSpec>) -> Result<Self> {
        Self::new(self.name.clone(), self.input_shape, layers)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn receptive_field(&self) -> ReceptiveField {
        let (mut rf_x, mut rf_y, mut jump) = (1, 1, 1);
        for layer in &self.layers {
            rf_x += (layer.extent_x() - 1) * jump;
            rf_y += (layer.extent_y() - 1) * jump;
            jump *= layer.stride;
        }
        ReceptiveField { x: rf_x, y: rf_y }
    }
}

/// Infers the shape at every layer boundary. Provided for symmetry with the
/// other free functions; a constructed [`NetworkSpec`] already holds them.
pub fn infer_shapes(net: &NetworkSpec) -> Vec<TensorShape> {
    net.infer_shapes()
}

pub fn receptive_field(net: &NetworkSpec) -> ReceptiveField {
    net.receptive_field()
}

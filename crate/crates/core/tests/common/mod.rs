#![allow(dead_code)]

use dwaccel::netir::{ActivationFn, LayerSpec, NetworkSpec, Padding, TensorShape};
use proptest::prelude::*;

/// Raw layer choice; turned into a [`LayerSpec`] once the channel count
/// entering it is known.
#[derive(Debug, Clone, Copy)]
pub struct Recipe {
    pub kind: u8,
    pub kernel: usize,
    pub dilation: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_channels: usize,
}

pub fn recipe() -> impl Strategy<Value = Recipe> {
    (0u8..4, 1usize..=7, 0usize..=2, 1usize..=2, 0usize..=3, 1usize..=12).prop_map(
        |(kind, kernel, dilation, stride, pad, out_channels)| Recipe {
            kind,
            kernel,
            dilation,
            stride,
            pad,
            out_channels,
        },
    )
}

pub fn build(c: usize, r: &Recipe) -> LayerSpec {
    match r.kind {
        0 => LayerSpec::conv(c, r.out_channels, r.kernel, r.kernel)
            .with_dilation(r.dilation)
            .with_stride(r.stride)
            .with_pad(r.pad),
        1 => LayerSpec::depthwise(c, r.kernel, r.kernel)
            .with_dilation(r.dilation)
            .with_stride(r.stride)
            .with_pad(r.pad),
        2 => LayerSpec::activation(c, ActivationFn::Relu),
        _ => LayerSpec::pool(c, r.kernel.min(3), r.stride),
    }
}

pub fn chain(input: TensorShape, recipes: &[Recipe]) -> Vec<LayerSpec> {
    let mut c = input.channels;
    recipes
        .iter()
        .map(|r| {
            let layer = build(c, r);
            c = layer.out_channels;
            layer
        })
        .collect()
}

/// Random valid networks of up to `max_layers` layers.
pub fn network(max_layers: usize) -> impl Strategy<Value = NetworkSpec> {
    (1usize..=6, 8usize..=40, 8usize..=40, prop::collection::vec(recipe(), 0..=max_layers))
        .prop_filter_map("layers do not fit the input", |(c, h, w, recipes)| {
            let input = TensorShape::new(c, h, w);
            NetworkSpec::new("random", input, chain(input, &recipes)).ok()
        })
}

/// `n` stride-1 3x3 convolutions with "same" padding and optional ReLUs in
/// between.
pub fn cascade(widths: &[usize], relu: bool) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for pair in widths.windows(2) {
        layers.push(LayerSpec::conv(pair[0], pair[1], 3, 3).with_padding(Padding::uniform(1)));
        if relu {
            layers.push(LayerSpec::activation(pair[1], ActivationFn::Relu));
        }
    }
    layers
}

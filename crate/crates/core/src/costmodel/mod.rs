//! Workload metrics: multiply-accumulates per input pixel and weight storage.
//!
//! Only convolution taps are counted. Biases, activations and pooling are
//! free. Per-pixel figures are normalized by the model input resolution, so a
//! whole network reduces to one scalar.

mod rewrite;

pub use rewrite::{ddc_rewrite, ddc_rewrite_composite, RewriteRule};

use crate::netir::{CompositeNetwork, ConvKind, LayerKind, LayerSpec, NetworkSpec, TensorShape};
use num_rational::Ratio;
use num_traits::ToPrimitive;

/// 8-bit quantized weights.
pub const DEFAULT_BYTES_PER_WEIGHT: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    /// Segment name for composite models.
    pub segment: Option<String>,
    pub tag: Option<String>,
    pub layer: usize,
    pub kind: ConvKind,
    pub kx: usize,
    pub ky: usize,
    pub dilation: usize,
    pub ic: usize,
    pub oc: usize,
    pub macs: u64,
    pub macs_per_input_pixel: Ratio<u64>,
    pub weight_count: u64,
    pub weight_bytes: u64,
}

impl LayerCost {
    /// Row identifier: the layer index, or `segment:index` for composites.
    pub fn id(&self) -> String {
        match &self.segment {
            Some(seg) => format!("{seg}:{}", self.layer),
            None => self.layer.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CostTotals {
    pub macs: u64,
    pub macs_per_input_pixel: Ratio<u64>,
    pub weight_count: u64,
    pub weight_bytes: u64,
}

impl CostTotals {
    fn add(&mut self, row: &LayerCost) {
        self.macs += row.macs;
        self.macs_per_input_pixel += row.macs_per_input_pixel;
        self.weight_count += row.weight_count;
        self.weight_bytes += row.weight_bytes;
    }

    pub fn macs_per_pixel_f64(&self) -> f64 {
        self.macs_per_input_pixel.to_f64().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub name: String,
    pub per_layer: Vec<LayerCost>,
    pub totals: CostTotals,
    pub bytes_per_weight: u64,
    pub input_pixels: u64,
}

impl CostReport {
    /// Totals over rows whose segment carries `tag`.
    pub fn subtotal(&self, tag: &str) -> CostTotals {
        let mut totals = CostTotals::default();
        for row in self.per_layer.iter().filter(|r| r.tag.as_deref() == Some(tag)) {
            totals.add(row);
        }
        totals
    }

    /// Distinct segment tags in first-seen order.
    pub fn tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = Vec::new();
        for tag in self.per_layer.iter().filter_map(|r| r.tag.clone()) {
            if !tags.contains(&tag) {
                tags.push(tag);
            }
        }
        tags
    }
}

/// Multiply-accumulates for one layer producing `output`.
pub fn layer_macs(layer: &LayerSpec, output: TensorShape) -> u64 {
    let pixels = output.pixels() as u64;
    match layer.kind {
        LayerKind::Conv(kind) if kind.is_regular() => {
            (layer.taps() * layer.in_channels * layer.out_channels) as u64 * pixels
        }
        LayerKind::Conv(_) => (layer.taps() * layer.out_channels) as u64 * pixels,
        _ => 0,
    }
}

/// Stored weights for one layer, biases excluded.
pub fn layer_weights(layer: &LayerSpec) -> u64 {
    match layer.kind {
        LayerKind::Conv(kind) if kind.is_regular() => {
            (layer.taps() * layer.in_channels * layer.out_channels) as u64
        }
        LayerKind::Conv(_) => (layer.taps() * layer.out_channels) as u64,
        _ => 0,
    }
}

pub fn cost_report(net: &NetworkSpec, bytes_per_weight: u64) -> CostReport {
    let mut report = composite_cost_report(&CompositeNetwork::from_single(net), bytes_per_weight);
    for row in &mut report.per_layer {
        row.segment = None;
    }
    report
}

/// MAC counts with the default 8-bit weight size.
pub fn macs_per_input_pixel(net: &NetworkSpec) -> CostReport {
    cost_report(net, DEFAULT_BYTES_PER_WEIGHT)
}

pub fn model_size_bytes(net: &NetworkSpec, bytes_per_weight: u64) -> CostReport {
    cost_report(net, bytes_per_weight)
}

/// Costs of a composite model. Shared-prefix layers are skipped; tied weight
/// groups are stored once but computed for every member.
pub fn composite_cost_report(net: &CompositeNetwork, bytes_per_weight: u64) -> CostReport {
    let input_pixels = net.input_shape().pixels() as u64;
    let mut per_layer = Vec::new();
    let mut totals = CostTotals::default();
    for account in net.accounts().into_iter().filter(|a| a.computed) {
        let seg = &net.segments()[account.segment];
        let layer = &seg.network.layers()[account.layer];
        let Some(kind) = layer.conv_kind() else {
            continue;
        };
        let macs = layer_macs(layer, seg.network.layer_output(account.layer));
        let weight_count = if account.weights_counted {
            layer_weights(layer)
        } else {
            0
        };
        let row = LayerCost {
            segment: Some(seg.name.clone()),
            tag: seg.tag.clone(),
            layer: account.layer,
            kind,
            kx: layer.kernel_x,
            ky: layer.kernel_y,
            dilation: layer.dilation,
            ic: layer.in_channels,
            oc: layer.out_channels,
            macs,
            macs_per_input_pixel: Ratio::new(macs, input_pixels),
            weight_count,
            weight_bytes: weight_count * bytes_per_weight,
        };
        totals.add(&row);
        per_layer.push(row);
    }
    CostReport {
        name: net.name().to_string(),
        per_layer,
        totals,
        bytes_per_weight,
        input_pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netir::{ActivationFn, TensorShape};

    fn single(input: TensorShape, layers: Vec<LayerSpec>) -> NetworkSpec {
        NetworkSpec::new("t", input, layers).unwrap()
    }

    #[test]
    fn regular_same_padding() {
        let net = single(
            TensorShape::new(32, 16, 16),
            vec![LayerSpec::conv(32, 64, 3, 3).with_pad(1)],
        );
        let report = macs_per_input_pixel(&net);
        assert_eq!(report.totals.macs_per_input_pixel, Ratio::from_integer(18_432));
        let sized = model_size_bytes(&net, 1);
        assert_eq!(sized.totals.weight_bytes, 18_432);
    }

    #[test]
    fn depthwise_dilation_does_not_change_macs() {
        for d in 0..4 {
            let net = single(
                TensorShape::new(64, 20, 20),
                vec![LayerSpec::depthwise(64, 3, 3).with_dilation(d).with_pad(d + 1)],
            );
            let report = macs_per_input_pixel(&net);
            assert_eq!(report.totals.macs_per_input_pixel, Ratio::from_integer(576));
            assert_eq!(report.totals.weight_count, 576);
        }
    }

    #[test]
    fn depthwise_five_by_five_size() {
        let net = single(
            TensorShape::new(16, 8, 8),
            vec![LayerSpec::depthwise(16, 5, 5).with_pad(2)],
        );
        assert_eq!(model_size_bytes(&net, 1).totals.weight_bytes, 400);
        assert_eq!(model_size_bytes(&net, 4).totals.weight_bytes, 1600);
    }

    #[test]
    fn normalizes_by_network_input() {
        let net = single(
            TensorShape::new(3, 16, 16),
            vec![
                LayerSpec::conv(3, 8, 3, 3).with_stride(2).with_pad(1),
                LayerSpec::activation(8, ActivationFn::Relu),
                LayerSpec::conv(8, 8, 1, 1),
            ],
        );
        let report = macs_per_input_pixel(&net);
        assert_eq!(report.per_layer.len(), 2);
        // 8x8 outputs over 16x16 inputs.
        assert_eq!(report.per_layer[0].macs_per_input_pixel, Ratio::new(216, 4));
        assert_eq!(report.per_layer[1].macs_per_input_pixel, Ratio::new(64, 4));
        assert_eq!(report.totals.macs_per_input_pixel, Ratio::from_integer(70));
    }

    #[test]
    fn doubling_output_channels_doubles_cost() {
        let base = single(
            TensorShape::new(8, 10, 10),
            vec![LayerSpec::conv(8, 12, 3, 3)],
        );
        let doubled = single(
            TensorShape::new(8, 10, 10),
            vec![LayerSpec::conv(8, 24, 3, 3)],
        );
        let (a, b) = (cost_report(&base, 1), cost_report(&doubled, 1));
        assert_eq!(b.totals.macs, 2 * a.totals.macs);
        assert_eq!(b.totals.weight_bytes, 2 * a.totals.weight_bytes);
    }
}

//! Replaces cascades of regular 3x3 convolutions with a dilated depthwise
//! convolution followed by a pointwise convolution.
//!
//! A cascade of `n` stride-1 3x3 layers sees `2n + 1` input pixels per axis.
//! A single 3x3 depthwise kernel with `n - 1` gaps between taps spans the
//! same extent, so the receptive field is unchanged while the channel mixing
//! moves into the cheap 1x1 layer.

use crate::error::{Error, Result};
use crate::netir::{
    ActivationFn, CompositeNetwork, ConvKind, LayerKind, LayerSpec, NetworkSpec, Padding,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewriteRule {
    /// Number of cascaded 3x3 layers matched by this rule.
    pub cascade_length: usize,
    /// Emit the 1x1 channel-mixing layer after the depthwise one. Without it
    /// the rule only applies to cascades that keep the channel count.
    pub insert_pointwise: bool,
}

impl RewriteRule {
    pub fn new(cascade_length: usize) -> Result<Self> {
        if cascade_length == 0 {
            return Err(Error::Rewrite("cascade length must be at least 1".into()));
        }
        Ok(Self {
            cascade_length,
            insert_pointwise: true,
        })
    }

    /// Gaps between taps of the replacement kernel.
    pub fn dilation(&self) -> usize {
        self.cascade_length - 1
    }

    /// The two rules for two- and three-layer cascades.
    pub fn standard() -> Vec<Self> {
        vec![Self::new(2).unwrap(), Self::new(3).unwrap()]
    }
}

fn is_cascade_conv(layer: &LayerSpec) -> bool {
    layer.kind == LayerKind::Conv(ConvKind::Regular)
        && layer.kernel_x == 3
        && layer.kernel_y == 3
        && layer.dilation == 0
}

/// Maximal runs of 3x3 regular convolutions, possibly separated by
/// activations. Returns `(start, end)` layer ranges, end exclusive, covering
/// first through last convolution of the run.
fn cascade_runs(layers: &[LayerSpec]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < layers.len() {
        if !is_cascade_conv(&layers[i]) {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        let mut j = end;
        loop {
            while j < layers.len() && layers[j].is_activation() {
                j += 1;
            }
            if j < layers.len() && is_cascade_conv(&layers[j]) {
                j += 1;
                end = j;
            } else {
                break;
            }
        }
        runs.push((start, end));
        i = end;
    }
    runs
}

fn check_rules(rules: &[RewriteRule]) -> Result<()> {
    for (i, a) in rules.iter().enumerate() {
        if a.cascade_length == 0 {
            return Err(Error::Rewrite("cascade length must be at least 1".into()));
        }
        if rules[..i].iter().any(|b| b.cascade_length == a.cascade_length) {
            return Err(Error::Rewrite(format!(
                "overlapping rules: cascade length {} matched by more than one rule",
                a.cascade_length
            )));
        }
    }
    Ok(())
}

fn replacement(run: &[LayerSpec], rule: &RewriteRule) -> Option<Vec<LayerSpec>> {
    let convs: Vec<&LayerSpec> = run.iter().filter(|l| l.is_conv()).collect();
    if convs.iter().any(|l| l.stride != 1) {
        return None;
    }
    let c_in = convs[0].in_channels;
    let c_out = convs[convs.len() - 1].out_channels;
    if !rule.insert_pointwise && c_in != c_out {
        return None;
    }
    // Summed padding keeps the output extent of the cascade.
    let padding = convs.iter().fold(Padding::default(), |acc, l| Padding {
        top: acc.top + l.padding.top,
        bottom: acc.bottom + l.padding.bottom,
        left: acc.left + l.padding.left,
        right: acc.right + l.padding.right,
    });
    let mut out = vec![
        LayerSpec::depthwise(c_in, 3, 3)
            .with_dilation(rule.dilation())
            .with_padding(padding),
        LayerSpec::activation(c_in, ActivationFn::Relu),
    ];
    if rule.insert_pointwise {
        out.push(LayerSpec::conv(c_in, c_out, 1, 1));
    }
    Some(out)
}

/// Applies `rules` to every maximal cascade whose length matches a rule.
/// Unmatched layers, and cascades containing a strided layer, pass through.
pub fn ddc_rewrite(net: &NetworkSpec, rules: &[RewriteRule]) -> Result<NetworkSpec> {
    check_rules(rules)?;
    let layers = net.layers();
    let mut out = Vec::with_capacity(layers.len());
    let mut cursor = 0;
    for (start, end) in cascade_runs(layers) {
        let run = &layers[start..end];
        let n = run.iter().filter(|l| l.is_conv()).count();
        let Some(rule) = rules.iter().find(|r| r.cascade_length == n) else {
            continue;
        };
        if let Some(new_layers) = replacement(run, rule) {
            out.extend_from_slice(&layers[cursor..start]);
            out.extend(new_layers);
            cursor = end;
        }
    }
    out.extend_from_slice(&layers[cursor..]);
    net.with_layers(out)
}

/// Rewrites every segment, or only those tagged `tag`.
pub fn ddc_rewrite_composite(
    net: &CompositeNetwork,
    rules: &[RewriteRule],
    tag: Option<&str>,
) -> Result<CompositeNetwork> {
    check_rules(rules)?;
    let networks = net
        .segments()
        .iter()
        .map(|seg| {
            if tag.is_none() || seg.tag.as_deref() == tag {
                ddc_rewrite(&seg.network, rules)
            } else {
                Ok(seg.network.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    net.with_networks(networks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::cost_report;
    use crate::netir::TensorShape;

    fn net(layers: Vec<LayerSpec>) -> NetworkSpec {
        let c = layers[0].in_channels;
        NetworkSpec::new("t", TensorShape::new(c, 20, 20), layers).unwrap()
    }

    #[test]
    fn two_cascade_becomes_dilated_depthwise() {
        let original = net(vec![
            LayerSpec::conv(16, 16, 3, 3).with_pad(1),
            LayerSpec::conv(16, 16, 3, 3).with_pad(1),
        ]);
        let out = ddc_rewrite(&original, &RewriteRule::standard()).unwrap();
        let l = out.layers();
        assert_eq!(l.len(), 3);
        assert_eq!(l[0].conv_kind(), Some(ConvKind::Depthwise));
        assert_eq!((l[0].dilation, l[0].in_channels), (1, 16));
        assert!(l[1].is_activation());
        assert_eq!(l[2].conv_kind(), Some(ConvKind::Pointwise));
        assert_eq!(original.receptive_field().x, 5);
        assert_eq!(out.receptive_field().x, 5);
        assert_eq!(out.output_shape(), original.output_shape());
    }

    #[test]
    fn three_cascade_costs() {
        let original = net(vec![
            LayerSpec::conv(64, 64, 3, 3).with_pad(1),
            LayerSpec::activation(64, ActivationFn::Relu),
            LayerSpec::conv(64, 64, 3, 3).with_pad(1),
            LayerSpec::activation(64, ActivationFn::Relu),
            LayerSpec::conv(64, 64, 3, 3).with_pad(1),
        ]);
        let out = ddc_rewrite(&original, &RewriteRule::standard()).unwrap();
        assert_eq!(out.layers()[0].dilation, 2);
        assert_eq!(out.receptive_field().x, 7);
        let before = cost_report(&original, 1);
        let after = cost_report(&out, 1);
        // Same-padded stride-1 layers: MACs per pixel equal MACs per output pixel.
        assert_eq!(before.totals.macs_per_input_pixel.to_integer(), 110_592);
        assert_eq!(after.totals.macs_per_input_pixel.to_integer(), 4_672);
    }

    #[test]
    fn no_cascade_is_identity() {
        let original = net(vec![
            LayerSpec::depthwise(8, 3, 3),
            LayerSpec::conv(8, 16, 1, 1),
            LayerSpec::conv(16, 16, 5, 5),
        ]);
        assert_eq!(ddc_rewrite(&original, &RewriteRule::standard()).unwrap(), original);
    }

    #[test]
    fn strided_cascade_not_matched() {
        let original = net(vec![
            LayerSpec::conv(8, 8, 3, 3).with_pad(1),
            LayerSpec::conv(8, 8, 3, 3).with_stride(2).with_pad(1),
        ]);
        assert_eq!(ddc_rewrite(&original, &RewriteRule::standard()).unwrap(), original);
    }

    #[test]
    fn unmatched_length_passes_through() {
        let layers = vec![LayerSpec::conv(8, 8, 3, 3).with_pad(1); 4];
        let original = net(layers);
        assert_eq!(ddc_rewrite(&original, &RewriteRule::standard()).unwrap(), original);
    }

    #[test]
    fn trailing_activation_kept() {
        let original = net(vec![
            LayerSpec::conv(8, 4, 3, 3).with_pad(1),
            LayerSpec::activation(4, ActivationFn::Relu),
            LayerSpec::conv(4, 4, 3, 3).with_pad(1),
            LayerSpec::activation(4, ActivationFn::Relu),
        ]);
        let out = ddc_rewrite(&original, &RewriteRule::standard()).unwrap();
        let labels: Vec<_> = out.layers().iter().map(|l| l.kind.label()).collect();
        assert_eq!(labels, ["depthwise", "relu", "pointwise", "relu"]);
        assert_eq!(out.layers()[2].out_channels, 4);
    }

    #[test]
    fn duplicate_rules_are_overlapping() {
        let original = net(vec![LayerSpec::conv(8, 8, 3, 3); 2]);
        let rules = [RewriteRule::new(2).unwrap(), RewriteRule::new(2).unwrap()];
        assert!(matches!(ddc_rewrite(&original, &rules), Err(Error::Rewrite(_))));
    }

    #[test]
    fn valid_padding_cascade_keeps_shape() {
        let original = net(vec![
            LayerSpec::conv(4, 6, 3, 3),
            LayerSpec::conv(6, 6, 3, 3),
            LayerSpec::conv(6, 2, 3, 3),
        ]);
        let out = ddc_rewrite(&original, &RewriteRule::standard()).unwrap();
        assert_eq!(out.output_shape(), original.output_shape());
    }

    #[test]
    fn depthwise_only_rule_requires_equal_channels() {
        let rule = RewriteRule {
            cascade_length: 2,
            insert_pointwise: false,
        };
        let keeps = net(vec![LayerSpec::conv(8, 8, 3, 3); 2]);
        assert_eq!(ddc_rewrite(&keeps, &[rule]).unwrap().layers().len(), 2);
        let widens = net(vec![LayerSpec::conv(8, 8, 3, 3), LayerSpec::conv(8, 16, 3, 3)]);
        assert_eq!(ddc_rewrite(&widens, &[rule]).unwrap(), widens);
    }
}

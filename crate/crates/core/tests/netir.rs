mod common;

use dwaccel::configs;
use dwaccel::netir::{composite_to_json, parse_model, parse_network, to_json, LayerSpec, Model, NetworkSpec};
use proptest::prelude::*;
use std::collections::BTreeSet;

/// Window anchors that fit inside the padded axis, counted one by one.
fn count_windows(len: usize, before: usize, after: usize, extent: usize, stride: usize) -> usize {
    let padded = len + before + after;
    (0..padded).step_by(stride).filter(|a| a + extent <= padded).count()
}

/// Input positions one output position depends on, walked back through
/// every layer on an unbounded axis.
fn dependency_span(layers: &[LayerSpec], horizontal: bool) -> usize {
    let mut positions: BTreeSet<i64> = BTreeSet::from([1_000_000]);
    for layer in layers.iter().rev() {
        let (k, pad) = if horizontal {
            (layer.kernel_x, layer.padding.left)
        } else {
            (layer.kernel_y, layer.padding.top)
        };
        let step = if layer.is_conv() { layer.dilation + 1 } else { 1 };
        positions = positions
            .iter()
            .flat_map(|&o| {
                (0..k).map(move |t| o * layer.stride as i64 + (t * step) as i64 - pad as i64)
            })
            .collect();
    }
    (positions.last().unwrap() - positions.first().unwrap() + 1) as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn shapes_match_window_count(net in common::network(6)) {
        let shapes = net.infer_shapes();
        prop_assert_eq!(shapes[0], net.input_shape());
        for (i, layer) in net.layers().iter().enumerate() {
            let (input, output) = (shapes[i], shapes[i + 1]);
            let p = layer.padding;
            prop_assert_eq!(output.channels, layer.out_channels);
            prop_assert_eq!(
                output.height,
                count_windows(input.height, p.top, p.bottom, layer.extent_y(), layer.stride)
            );
            prop_assert_eq!(
                output.width,
                count_windows(input.width, p.left, p.right, layer.extent_x(), layer.stride)
            );
        }
    }

    #[test]
    fn receptive_field_matches_dependency_walk(net in common::network(6)) {
        let rf = net.receptive_field();
        prop_assert_eq!(rf.x, dependency_span(net.layers(), true));
        prop_assert_eq!(rf.y, dependency_span(net.layers(), false));
    }

    #[test]
    fn json_round_trip(net in common::network(6)) {
        let text = to_json(&net);
        let back = parse_network(&text).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(to_json(&back), text);
    }
}

#[test]
fn dilated_layer_spans_gaps() {
    let layer = LayerSpec::depthwise(4, 3, 3).with_dilation(2);
    assert_eq!(layer.extent_x(), 7);
    assert_eq!(dependency_span(&[layer], true), 7);
}

#[test]
fn bundled_models_round_trip() {
    for name in configs::bundled_names() {
        let model = parse_model(configs::bundled(name).unwrap()).unwrap();
        let text = match &model {
            Model::Single(net) => to_json(net),
            Model::Composite(net) => composite_to_json(net),
        };
        assert_eq!(parse_model(&text).unwrap(), model, "{name}");
    }
}

#[test]
fn malformed_documents_are_rejected() {
    assert!(parse_network("{").is_err());
    let doc = |layer: &str| {
        format!(r#"{{"name": "x", "input_shape": {{"c": 3, "h": 8, "w": 8}}, "layers": [{layer}]}}"#)
    };
    assert!(parse_network(&doc(r#"{"type": "conv", "ic": 3, "oc": 8, "kx": 3, "ky": 3}"#)).is_ok());
    assert!(parse_network(&doc(r#"{"type": "conv", "ic": 4, "oc": 8, "kx": 3, "ky": 3}"#)).is_err());
    assert!(parse_network(&doc(r#"{"type": "conv", "ic": 3, "oc": 8, "kx": 9, "ky": 9}"#)).is_err());
    assert!(parse_network(&doc(r#"{"type": "depthwise", "ic": 3, "oc": 6, "kx": 3, "ky": 3}"#)).is_err());
    assert!(parse_network(&doc(r#"{"type": "warp", "ic": 3, "oc": 3}"#)).is_err());
    assert!(NetworkSpec::new("x", dwaccel::netir::TensorShape::new(0, 8, 8), vec![]).is_err());
}

//! JSON network description files.
//!
//! ```json
//! { "name": "block", "input_shape": {"c": 64, "h": 56, "w": 56},
//!   "layers": [
//!     {"type": "depthwise", "ic": 64, "oc": 64, "kx": 3, "ky": 3, "pad": "same"},
//!     {"type": "activation", "act": "relu"},
//!     {"type": "conv", "ic": 64, "oc": 128, "kx": 1, "ky": 1} ] }
//! ```
//!
//! `dilation` counts zero gaps between taps (framework dilation minus one).
//! `pad` is an integer, `"same"`, or `{"top","bottom","left","right"}`.
//! Unknown keys are rejected.

use super::composite::{CompositeNetwork, Model, Segment, SharedPrefix};
use super::{ActivationFn, ConvKind, LayerKind, LayerSpec, NetworkSpec, Padding, TensorShape};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeDoc {
    c: usize,
    h: usize,
    w: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LayerType {
    Conv,
    Depthwise,
    Activation,
    Pool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ActDoc {
    Relu,
    Quantize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SidesDoc {
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum PadDoc {
    Uniform(usize),
    Named(String),
    Sides(SidesDoc),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    #[serde(rename = "type")]
    ty: LayerType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ic: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    oc: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ky: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dilation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pad: Option<PadDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    act: Option<ActDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    #[serde(default)]
    name: String,
    input_shape: ShapeDoc,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SharedPrefixDoc {
    segment: String,
    layers: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shares_prefix: Option<SharedPrefixDoc>,
    network: NetworkDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompositeDoc {
    #[serde(default)]
    name: String,
    input_shape: ShapeDoc,
    segments: Vec<SegmentDoc>,
}

fn syntax(err: serde_json::Error) -> Error {
    Error::Syntax {
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

/// Parses a sequential network description.
pub fn parse_network(document: &str) -> Result<NetworkSpec> {
    let doc: NetworkDoc = serde_json::from_str(document).map_err(syntax)?;
    network_from_doc(doc)
}

/// Parses either a sequential network or a multi-segment composite; the
/// presence of a top-level `segments` key selects the latter.
pub fn parse_model(document: &str) -> Result<Model> {
    let value: serde_json::Value = serde_json::from_str(document).map_err(syntax)?;
    if value.get("segments").is_some() {
        let doc: CompositeDoc = serde_json::from_str(document).map_err(syntax)?;
        composite_from_doc(doc).map(Model::Composite)
    } else {
        parse_network(document).map(Model::Single)
    }
}

/// Parses one layer object, validated as the only layer of a network whose
/// input has the layer's `ic` channels and the given spatial size.
pub fn parse_layer(document: &str, height: usize, width: usize) -> Result<LayerSpec> {
    let doc: LayerDoc = serde_json::from_str(document).map_err(syntax)?;
    let channels = doc.ic.unwrap_or(1);
    let input = TensorShape::new(channels, height, width);
    input.validate()?;
    let layer = layer_from_doc(0, &doc, input)?;
    let net = NetworkSpec::new("layer", input, vec![layer])?;
    Ok(net.layers()[0])
}

fn shape_from_doc(doc: &ShapeDoc) -> TensorShape {
    TensorShape::new(doc.c, doc.h, doc.w)
}

fn network_from_doc(doc: NetworkDoc) -> Result<NetworkSpec> {
    let input = shape_from_doc(&doc.input_shape);
    input.validate()?;
    let mut current = input;
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (index, layer_doc) in doc.layers.iter().enumerate() {
        let layer = layer_from_doc(index, layer_doc, current)?;
        current = layer
            .output_shape(current)
            .map_err(|message| Error::layer(index, message))?;
        layers.push(layer);
    }
    NetworkSpec::new(doc.name, input, layers)
}

fn layer_from_doc(index: usize, doc: &LayerDoc, input: TensorShape) -> Result<LayerSpec> {
    let required = |value: Option<usize>, key: &str| {
        value.ok_or_else(|| Error::layer(index, format!("missing required key `{key}`")))
    };
    let reject = |present: bool, key: &str, ty: &str| {
        if present {
            Err(Error::layer(index, format!("`{key}` is not valid on {ty} layers")))
        } else {
            Ok(())
        }
    };
    let mut layer = match doc.ty {
        LayerType::Conv | LayerType::Depthwise => {
            reject(doc.act.is_some(), "act", "convolution")?;
            let ic = required(doc.ic, "ic")?;
            let oc = required(doc.oc, "oc")?;
            let kx = required(doc.kx, "kx")?;
            let ky = required(doc.ky, "ky")?;
            let mut layer = LayerSpec::conv(ic, oc, kx, ky);
            if matches!(doc.ty, LayerType::Depthwise) {
                layer.kind = LayerKind::Conv(ConvKind::Depthwise);
            }
            layer
        }
        LayerType::Activation => {
            for (present, key) in [
                (doc.kx.is_some(), "kx"),
                (doc.ky.is_some(), "ky"),
                (doc.dilation.is_some(), "dilation"),
                (doc.stride.is_some(), "stride"),
                (doc.pad.is_some(), "pad"),
            ] {
                reject(present, key, "activation")?;
            }
            let act = match doc.act {
                Some(ActDoc::Relu) => ActivationFn::Relu,
                Some(ActDoc::Quantize) => ActivationFn::Quantize,
                None => return Err(Error::layer(index, "missing required key `act`")),
            };
            let ic = doc.ic.unwrap_or(input.channels);
            let mut layer = LayerSpec::activation(ic, act);
            layer.out_channels = doc.oc.unwrap_or(ic);
            layer
        }
        LayerType::Pool => {
            reject(doc.act.is_some(), "act", "pool")?;
            let ic = doc.ic.unwrap_or(input.channels);
            let kx = required(doc.kx, "kx")?;
            let ky = required(doc.ky, "ky")?;
            let mut layer = LayerSpec::pool(ic, kx, 1);
            layer.kernel_y = ky;
            layer.out_channels = doc.oc.unwrap_or(ic);
            layer
        }
    };
    layer.dilation = doc.dilation.unwrap_or(0);
    layer.stride = doc.stride.unwrap_or(1);
    if layer.stride == 0 {
        return Err(Error::layer(index, "stride must be at least 1"));
    }
    layer.padding = match &doc.pad {
        None => Padding::default(),
        Some(PadDoc::Uniform(p)) => Padding::uniform(*p),
        Some(PadDoc::Sides(s)) => Padding {
            top: s.top,
            bottom: s.bottom,
            left: s.left,
            right: s.right,
        },
        Some(PadDoc::Named(name)) if name == "same" => {
            if layer.kernel_x == 0 || layer.kernel_y == 0 {
                return Err(Error::layer(index, "kernel size must be at least 1"));
            }
            Padding::same(input, layer.extent_y(), layer.extent_x(), layer.stride)
        }
        Some(PadDoc::Named(other)) => {
            return Err(Error::layer(
                index,
                format!("unknown padding `{other}` (expected an integer or \"same\")"),
            ))
        }
    };
    Ok(layer)
}

fn composite_from_doc(doc: CompositeDoc) -> Result<CompositeNetwork> {
    let mut segments = Vec::with_capacity(doc.segments.len());
    for seg in doc.segments {
        let network = network_from_doc(seg.network).map_err(|err| {
            Error::InvalidNetwork(format!("segment `{}`: {err}", seg.name))
        })?;
        segments.push(Segment {
            network: network.renamed(seg.name.clone()),
            name: seg.name,
            tag: seg.tag,
            weight_group: seg.weights,
            shared_prefix: seg.shares_prefix.map(|p| SharedPrefix {
                segment: p.segment,
                layers: p.layers,
            }),
        });
    }
    CompositeNetwork::new(doc.name, shape_from_doc(&doc.input_shape), segments)
}

fn shape_doc(shape: TensorShape) -> ShapeDoc {
    ShapeDoc {
        c: shape.channels,
        h: shape.height,
        w: shape.width,
    }
}

fn layer_doc(layer: &LayerSpec) -> LayerDoc {
    let pad = if layer.padding.is_uniform() {
        PadDoc::Uniform(layer.padding.top)
    } else {
        PadDoc::Sides(SidesDoc {
            top: layer.padding.top,
            bottom: layer.padding.bottom,
            left: layer.padding.left,
            right: layer.padding.right,
        })
    };
    match layer.kind {
        LayerKind::Activation(act) => LayerDoc {
            ty: LayerType::Activation,
            ic: Some(layer.in_channels),
            oc: Some(layer.out_channels),
            kx: None,
            ky: None,
            dilation: None,
            stride: None,
            pad: None,
            act: Some(match act {
                ActivationFn::Relu => ActDoc::Relu,
                ActivationFn::Quantize => ActDoc::Quantize,
            }),
        },
        LayerKind::Conv(_) | LayerKind::Pool => LayerDoc {
            ty: match layer.kind {
                LayerKind::Conv(ConvKind::Depthwise) => LayerType::Depthwise,
                LayerKind::Pool => LayerType::Pool,
                _ => LayerType::Conv,
            },
            ic: Some(layer.in_channels),
            oc: Some(layer.out_channels),
            kx: Some(layer.kernel_x),
            ky: Some(layer.kernel_y),
            dilation: Some(layer.dilation),
            stride: Some(layer.stride),
            pad: Some(pad),
            act: None,
        },
    }
}

fn network_doc(net: &NetworkSpec) -> NetworkDoc {
    NetworkDoc {
        name: net.name().to_string(),
        input_shape: shape_doc(net.input_shape()),
        layers: net.layers().iter().map(layer_doc).collect(),
    }
}

/// Serializes a network with every default written out explicitly.
pub fn to_json(net: &NetworkSpec) -> String {
    serde_json::to_string_pretty(&network_doc(net)).expect("network documents always serialize")
}

pub fn composite_to_json(net: &CompositeNetwork) -> String {
    let doc = CompositeDoc {
        name: net.name().to_string(),
        input_shape: shape_doc(net.input_shape()),
        segments: net
            .segments()
            .iter()
            .map(|seg| SegmentDoc {
                name: seg.name.clone(),
                tag: seg.tag.clone(),
                weights: seg.weight_group.clone(),
                shares_prefix: seg.shared_prefix.as_ref().map(|p| SharedPrefixDoc {
                    segment: p.segment.clone(),
                    layers: p.layers,
                }),
                network: network_doc(&seg.network),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("composite documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netir::ConvKind;

    #[test]
    fn minimal_document_gets_defaults() {
        let net = parse_network(
            r#"{"name":"one","input_shape":{"c":32,"h":16,"w":16},
                "layers":[{"type":"conv","ic":32,"oc":64,"kx":3,"ky":3}]}"#,
        )
        .unwrap();
        assert_eq!(net.layers().len(), 1);
        let layer = net.layers()[0];
        assert_eq!(layer.conv_kind(), Some(ConvKind::Regular));
        assert_eq!((layer.stride, layer.dilation), (1, 0));
        assert_eq!(layer.padding, Padding::default());
        assert_eq!(net.output_shape(), TensorShape::new(64, 14, 14));
    }

    #[test]
    fn depthwise_ic_oc_mismatch() {
        let err = parse_network(
            r#"{"name":"bad","input_shape":{"c":32,"h":16,"w":16},
                "layers":[{"type":"depthwise","ic":32,"oc":64,"kx":3,"ky":3}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidLayer { layer: 0, .. }));
        assert!(err.to_string().contains("depthwise requires IC == OC"));
    }

    #[test]
    fn depthwise_block() {
        let net = parse_network(
            r#"{"name":"fig1","input_shape":{"c":64,"h":56,"w":56},"layers":[
                {"type":"depthwise","ic":64,"oc":64,"kx":3,"ky":3,"pad":"same"},
                {"type":"activation","act":"relu"},
                {"type":"conv","ic":64,"oc":128,"kx":1,"ky":1}]}"#,
        )
        .unwrap();
        let kinds: Vec<_> = net.layers().iter().map(|l| l.kind.label()).collect();
        assert_eq!(kinds, ["depthwise", "relu", "pointwise"]);
        assert_eq!(net.output_shape(), TensorShape::new(128, 56, 56));
    }

    #[test]
    fn unknown_key_rejected_with_position() {
        let err = parse_network(
            "{\"name\":\"x\",\"input_shape\":{\"c\":1,\"h\":4,\"w\":4},\n\"layers\":[{\"type\":\"conv\",\"bias\":true}]}",
        )
        .unwrap_err();
        match err {
            Error::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn truncated_document_reports_position() {
        let err = parse_network("{\"name\": \"x\",\n  \"layers\": [").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_padding_name() {
        let err = parse_network(
            r#"{"input_shape":{"c":1,"h":4,"w":4},
                "layers":[{"type":"conv","ic":1,"oc":1,"kx":3,"ky":3,"pad":"valid"}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown padding"));
    }

    #[test]
    fn activation_rejects_kernel() {
        let err = parse_network(
            r#"{"input_shape":{"c":1,"h":4,"w":4},
                "layers":[{"type":"activation","act":"relu","kx":3}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("`kx` is not valid"));
    }

    #[test]
    fn same_padding_with_dilation_round_trips() {
        let net = parse_network(
            r#"{"name":"d","input_shape":{"c":4,"h":9,"w":10},"layers":[
                {"type":"depthwise","ic":4,"oc":4,"kx":3,"ky":3,"dilation":2,"pad":"same"},
                {"type":"pool","kx":2,"ky":2,"stride":2}]}"#,
        )
        .unwrap();
        assert_eq!(net.layer_output(0), TensorShape::new(4, 9, 10));
        let again = parse_network(&to_json(&net)).unwrap();
        assert_eq!(again, net);
    }
}

//! Example networks shipped with the crate.
//!
//! * `fig1-block`: depthwise 3x3, ReLU, pointwise 64 to 128.
//! * `mobilenet-v1-0.25`: the width-0.25 MobileNetV1 feature extractor at VGA.
//! * `context-module`: the three-branch detection context module applied at
//!   strides 8, 16 and 32, one weight set shared across levels.
//! * `context-module-ddc`: the same after the DDC rewrite with cascade
//!   lengths 1, 2 and 3.
//! * `retinaface-mnet025`: backbone, feature pyramid, per-level context
//!   modules and heads of the MobileNet-0.25 face detector.
//! * `retinaface-mnet025-ddc`: the detector with its context modules
//!   rewritten the same way.
//!
//! The context module sizes are quoted for float checkpoints, hence
//! [`CHECKPOINT_BYTES_PER_WEIGHT`].

use crate::costmodel::RewriteRule;

pub const FIG1_BLOCK: &str = include_str!("../configs/fig1_block.json");
pub const MOBILENET_V1_025: &str = include_str!("../configs/mobilenet_v1_025.json");
pub const CONTEXT_MODULE: &str = include_str!("../configs/context_module.json");
pub const CONTEXT_MODULE_DDC: &str = include_str!("../configs/context_module_ddc.json");
pub const RETINAFACE_MNET025: &str = include_str!("../configs/retinaface_mnet025.json");
pub const RETINAFACE_MNET025_DDC: &str = include_str!("../configs/retinaface_mnet025_ddc.json");

/// 32-bit float weights.
pub const CHECKPOINT_BYTES_PER_WEIGHT: u64 = 4;

/// Segment tag of the context modules.
pub const CONTEXT_TAG: &str = "context";

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "fig1-block" => Some(FIG1_BLOCK),
        "mobilenet-v1-0.25" => Some(MOBILENET_V1_025),
        "context-module" => Some(CONTEXT_MODULE),
        "context-module-ddc" => Some(CONTEXT_MODULE_DDC),
        "retinaface-mnet025" => Some(RETINAFACE_MNET025),
        "retinaface-mnet025-ddc" => Some(RETINAFACE_MNET025_DDC),
        _ => None,
    }
}

pub fn bundled_names() -> &'static [&'static str] {
    &[
        "fig1-block",
        "mobilenet-v1-0.25",
        "context-module",
        "context-module-ddc",
        "retinaface-mnet025",
        "retinaface-mnet025-ddc",
    ]
}

/// Rules turning every context-module branch into depthwise plus pointwise:
/// the single 3x3 becomes an undilated depthwise, the two- and three-layer
/// cascades dilated ones.
pub fn context_rules() -> Vec<RewriteRule> {
    (1..=3).map(|n| RewriteRule::new(n).unwrap()).collect()
}

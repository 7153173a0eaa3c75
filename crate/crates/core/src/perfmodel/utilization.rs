//! MAC utilization of depthwise layers on competing architectures.

use crate::netir::ConvKind;
use num_rational::Ratio;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchModel {
    /// Inter-output-channel parallel design; one of `t_m` lanes is busy on
    /// depthwise layers.
    Liu { t_m: u64 },
    /// Input/output channel parallel design with equal tiling factors.
    Su,
    /// Intra-kernel 3x3 tiles; `alpha` tiles cover one kernel. Defaults to
    /// `ceil(X/3) * ceil(Y/3)`.
    Yu { alpha: Option<u64> },
    Proposed,
}

impl ArchModel {
    pub fn label(&self) -> &'static str {
        match self {
            ArchModel::Liu { .. } => "liu",
            ArchModel::Su => "su",
            ArchModel::Yu { .. } => "yu",
            ArchModel::Proposed => "proposed",
        }
    }
}

/// Fraction of MAC units doing useful work. Regular layers keep every
/// architecture busy.
pub fn utilization(model: ArchModel, kind: ConvKind, x: u64, y: u64) -> Ratio<u64> {
    assert!(x >= 1 && y >= 1, "kernel dimensions must be positive");
    if kind != ConvKind::Depthwise {
        return Ratio::from_integer(1);
    }
    match model {
        ArchModel::Liu { t_m } => Ratio::new(1, t_m.max(1)),
        ArchModel::Su => Ratio::new(1, 2),
        ArchModel::Yu { alpha } => {
            let alpha = alpha.unwrap_or(x.div_ceil(3) * y.div_ceil(3)).max(1);
            Ratio::new(x * y, 9 * alpha).min(Ratio::from_integer(1))
        }
        ArchModel::Proposed => Ratio::from_integer(1),
    }
}

/// Whole percent, halves rounded up.
pub fn percent(fraction: Ratio<u64>) -> u64 {
    let scaled = fraction * 100;
    (scaled + Ratio::new(1, 2)).floor().to_integer()
}

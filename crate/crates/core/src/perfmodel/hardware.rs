use crate::error::{Error, Result};
use crate::netir::{LayerSpec, TensorShape};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSize {
    pub h: usize,
    pub w: usize,
}

impl BlockSize {
    pub fn new(h: usize, w: usize) -> Self {
        Self { h, w }
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }
}

/// Whether weights are streamed again for every spatial block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFetch {
    /// Every block pays the full memory term, weights included.
    #[default]
    PerBlock,
    /// Weights stream once per layer while feature maps stream per block.
    Once,
}

/// Accelerator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    #[serde(default)]
    pub name: String,
    /// Convolution cores.
    pub pe_num: usize,
    /// Parallel MAC units per core.
    pub mac_pe: usize,
    /// Feature-map words transferred per cycle.
    pub bw_fm: usize,
    /// Weight words transferred per cycle.
    pub bw_w: usize,
    /// Output block (ON x OM).
    pub out_block: BlockSize,
    /// Input block (IN x IM). Derived from the kernel halo when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_block: Option<BlockSize>,
    pub clock_hz: u64,
    pub fm_memory_bytes: u64,
    pub w_memory_bytes: u64,
    /// Cycles per block charged to activation and pooling layers.
    #[serde(default)]
    pub aplpu_latency: u64,
    #[serde(default)]
    pub weight_fetch: WeightFetch,
    /// Largest accepted frame, either orientation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_frame: Option<BlockSize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_kernel: Option<usize>,
    /// Advertised MACs per cycle; must equal `pe_num * mac_pe` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macs_per_cycle: Option<usize>,
}

const KIB: u64 = 1024;

impl HardwareConfig {
    /// The dual-mode accelerator: 8 cores of 64 MACs at 400 MHz, 4 MiB
    /// feature memory, 2 MiB weight memory, VGA frames, kernels up to 7x7.
    pub fn proposed() -> Self {
        Self {
            name: "proposed".into(),
            pe_num: 8,
            mac_pe: 64,
            bw_fm: 16,
            bw_w: 16,
            out_block: BlockSize::new(16, 16),
            in_block: None,
            clock_hz: 400_000_000,
            fm_memory_bytes: 4096 * KIB,
            w_memory_bytes: 2048 * KIB,
            aplpu_latency: 0,
            weight_fetch: WeightFetch::PerBlock,
            max_frame: Some(BlockSize::new(480, 640)),
            max_kernel: Some(7),
            macs_per_cycle: Some(512),
        }
    }

    /// The same MAC budget arranged as 64 cores of 8 MACs, as used for the
    /// intra-kernel-parallel comparison design.
    pub fn related_yu() -> Self {
        Self {
            name: "related-yu".into(),
            pe_num: 64,
            mac_pe: 8,
            ..Self::proposed()
        }
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "proposed" => Some(Self::proposed()),
            "related-yu" => Some(Self::related_yu()),
            _ => None,
        }
    }

    pub fn profile_names() -> &'static [&'static str] {
        &["proposed", "related-yu"]
    }

    pub fn from_json(document: &str) -> Result<Self> {
        let hw: Self = serde_json::from_str(document).map_err(|err| Error::Syntax {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        })?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hardware configs always serialize")
    }

    pub fn macs_per_cycle_total(&self) -> usize {
        self.pe_num * self.mac_pe
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("pe_num", self.pe_num),
            ("mac_pe", self.mac_pe),
            ("bw_fm", self.bw_fm),
            ("bw_w", self.bw_w),
            ("out_block.h", self.out_block.h),
            ("out_block.w", self.out_block.w),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::InvalidHardware(format!("{name} must be at least 1")));
            }
        }
        if self.clock_hz == 0 {
            return Err(Error::InvalidHardware("clock_hz must be positive".into()));
        }
        if let Some(advertised) = self.macs_per_cycle {
            if advertised != self.macs_per_cycle_total() {
                return Err(Error::InvalidHardware(format!(
                    "pe_num * mac_pe = {} but {advertised} MACs/cycle advertised",
                    self.macs_per_cycle_total()
                )));
            }
        }
        if let Some(input) = self.in_block {
            if input.h < self.out_block.h || input.w < self.out_block.w {
                return Err(Error::InvalidHardware(
                    "input block must cover the output block".into(),
                ));
            }
        }
        Ok(())
    }

    /// Input block (IN, IM) feeding one output block of `layer`.
    pub fn input_block(&self, layer: &LayerSpec) -> BlockSize {
        self.in_block.unwrap_or_else(|| {
            BlockSize::new(
                (self.out_block.h - 1) * layer.stride + layer.extent_y(),
                (self.out_block.w - 1) * layer.stride + layer.extent_x(),
            )
        })
    }

    /// Output blocks needed to tile `output`; edge blocks count in full.
    pub fn blocks(&self, output: TensorShape) -> u64 {
        (output.height.div_ceil(self.out_block.h) * output.width.div_ceil(self.out_block.w)) as u64
    }

    pub fn check_frame(&self, frame: TensorShape) -> Result<()> {
        if let Some(max) = self.max_frame {
            let fits = |h: usize, w: usize| frame.height <= h && frame.width <= w;
            if !fits(max.h, max.w) && !fits(max.w, max.h) {
                return Err(Error::InvalidArgument(format!(
                    "frame {}x{} exceeds the {}x{} maximum of `{}`",
                    frame.height, frame.width, max.h, max.w, self.name
                )));
            }
        }
        Ok(())
    }

    pub fn check_kernel(&self, index: usize, layer: &LayerSpec) -> Result<()> {
        if let (Some(max), true) = (self.max_kernel, layer.is_conv()) {
            if layer.kernel_x > max || layer.kernel_y > max {
                return Err(Error::layer(
                    index,
                    format!(
                        "{}x{} kernel exceeds the {max}x{max} maximum of `{}`",
                        layer.kernel_x, layer.kernel_y, self.name
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_profile_is_512_macs() {
        let hw = HardwareConfig::proposed();
        hw.validate().unwrap();
        assert_eq!(hw.macs_per_cycle_total(), 512);
        assert_eq!(HardwareConfig::related_yu().macs_per_cycle_total(), 512);
    }

    #[test]
    fn json_round_trip() {
        let hw = HardwareConfig::proposed();
        assert_eq!(HardwareConfig::from_json(&hw.to_json()).unwrap(), hw);
    }

    #[test]
    fn advertised_mismatch_rejected() {
        let hw = HardwareConfig {
            macs_per_cycle: Some(256),
            ..HardwareConfig::proposed()
        };
        assert!(hw.validate().is_err());
    }

    #[test]
    fn derived_input_block() {
        let hw = HardwareConfig::proposed();
        let b = hw.input_block(&LayerSpec::conv(1, 1, 3, 3));
        assert_eq!((b.h, b.w), (18, 18));
        let b = hw.input_block(&LayerSpec::conv(1, 1, 3, 3).with_dilation(1));
        assert_eq!((b.h, b.w), (20, 20));
        let b = hw.input_block(&LayerSpec::conv(1, 1, 3, 3).with_stride(2));
        assert_eq!((b.h, b.w), (33, 33));
    }

    #[test]
    fn frame_limits() {
        let hw = HardwareConfig::proposed();
        assert!(hw.check_frame(TensorShape::new(3, 480, 640)).is_ok());
        assert!(hw.check_frame(TensorShape::new(3, 640, 480)).is_ok());
        assert!(hw.check_frame(TensorShape::new(3, 720, 1280)).is_err());
    }
}

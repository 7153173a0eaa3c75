use super::{AccTensor, QuantTensor, QuantWeights, WeightLayout};
use crate::error::{Error, Result};
use crate::netir::{LayerKind, LayerSpec, TensorShape};
use crate::perfmodel::HardwareConfig;

/// Perturbation of one blocked-path output, for negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fault {
    /// Flat channels-first index into the layer output.
    pub index: usize,
    pub delta: i32,
}

fn check(input: &QuantTensor, weights: &QuantWeights, layer: &LayerSpec) -> Result<TensorShape> {
    let expected = WeightLayout::for_layer(layer)
        .ok_or_else(|| Error::Contract(format!("{} layer is not a convolution", layer.kind.label())))?;
    if weights.layout != expected {
        return Err(Error::ShapeMismatch(format!(
            "weights {:?} do not match layer layout {expected:?}",
            weights.layout
        )));
    }
    if input.shape.channels != layer.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, layer expects {}",
            input.shape.channels, layer.in_channels
        )));
    }
    layer.output_shape(input.shape).map_err(Error::ShapeMismatch)
}

/// Input coordinate of output position `o` and tap `k`, or `None` when it
/// falls into the zero padding.
fn source(o: usize, k: usize, stride: usize, step: usize, pad: usize, len: usize) -> Option<usize> {
    (o * stride + k * step).checked_sub(pad).filter(|&i| i < len)
}

/// Straight nested loops over outputs and taps.
pub fn conv_oracle(input: &QuantTensor, weights: &QuantWeights, layer: &LayerSpec) -> Result<AccTensor> {
    let out = check(input, weights, layer)?;
    let depthwise = matches!(weights.layout, WeightLayout::Depthwise { .. });
    let step = layer.dilation + 1;
    let (h, w) = (input.shape.height, input.shape.width);
    let mut data = Vec::with_capacity(out.elements());
    for o in 0..out.channels {
        for oy in 0..out.height {
            for ox in 0..out.width {
                let mut acc = 0i32;
                let inputs = if depthwise { o..o + 1 } else { 0..layer.in_channels };
                for i in inputs {
                    for ky in 0..layer.kernel_y {
                        let Some(iy) = source(oy, ky, layer.stride, step, layer.padding.top, h) else {
                            continue;
                        };
                        for kx in 0..layer.kernel_x {
                            let Some(ix) = source(ox, kx, layer.stride, step, layer.padding.left, w)
                            else {
                                continue;
                            };
                            acc += weights.at(o, i, ky, kx) as i32 * input.get(i, iy, ix) as i32;
                        }
                    }
                }
                data.push(acc);
            }
        }
    }
    Ok(AccTensor {
        shape: out,
        data,
        scale_exponent: input.scale_exponent + weights.scale_exponent,
    })
}

/// Copy of one input channel covering an output block plus halo; positions
/// in the padding read as zero.
struct InputBlock {
    data: Vec<i32>,
    width: usize,
}

impl InputBlock {
    #[allow(clippy::too_many_arguments)]
    fn fetch(
        input: &QuantTensor,
        channel: usize,
        layer: &LayerSpec,
        y0: usize,
        x0: usize,
        rows: usize,
        cols: usize,
    ) -> Self {
        let height = (rows - 1) * layer.stride + layer.extent_y();
        let width = (cols - 1) * layer.stride + layer.extent_x();
        let mut data = vec![0; height * width];
        for r in 0..height {
            let Some(iy) = (y0 * layer.stride + r)
                .checked_sub(layer.padding.top)
                .filter(|&iy| iy < input.shape.height)
            else {
                continue;
            };
            for c in 0..width {
                if let Some(ix) = (x0 * layer.stride + c)
                    .checked_sub(layer.padding.left)
                    .filter(|&ix| ix < input.shape.width)
                {
                    data[r * width + c] = input.get(channel, iy, ix) as i32;
                }
            }
        }
        Self { data, width }
    }

    fn get(&self, r: usize, c: usize) -> i32 {
        self.data[r * self.width + c]
    }
}

/// Blocked loop order of the accelerator.
///
/// Regular mode: output-channel group of `pe_num`, then spatial block, then
/// input channel; each core accumulates its output block over the input
/// channels. Depthwise mode drops the input-channel level: each core reads
/// only its own channel.
pub fn conv_blocked(
    input: &QuantTensor,
    weights: &QuantWeights,
    layer: &LayerSpec,
    hw: &HardwareConfig,
) -> Result<AccTensor> {
    conv_blocked_with_fault(input, weights, layer, hw, None)
}

pub fn conv_blocked_with_fault(
    input: &QuantTensor,
    weights: &QuantWeights,
    layer: &LayerSpec,
    hw: &HardwareConfig,
    fault: Option<Fault>,
) -> Result<AccTensor> {
    let out = check(input, weights, layer)?;
    hw.validate()?;
    let depthwise = matches!(weights.layout, WeightLayout::Depthwise { .. });
    let step = layer.dilation + 1;
    let (bh, bw) = (hw.out_block.h, hw.out_block.w);
    let mut data = vec![0i32; out.elements()];
    for group_start in (0..out.channels).step_by(hw.pe_num) {
        let cores = group_start..(group_start + hw.pe_num).min(out.channels);
        for y0 in (0..out.height).step_by(bh) {
            for x0 in (0..out.width).step_by(bw) {
                let rows = bh.min(out.height - y0);
                let cols = bw.min(out.width - x0);
                let mut partial = vec![vec![0i32; rows * cols]; cores.len()];
                let mut accumulate = |core: usize, o: usize, i: usize, block: &InputBlock| {
                    let acc = &mut partial[core];
                    for ky in 0..layer.kernel_y {
                        for kx in 0..layer.kernel_x {
                            let wv = weights.at(o, i, ky, kx) as i32;
                            for r in 0..rows {
                                for c in 0..cols {
                                    let v = block.get(r * layer.stride + ky * step, c * layer.stride + kx * step);
                                    acc[r * cols + c] += wv * v;
                                }
                            }
                        }
                    }
                };
                if depthwise {
                    for (core, o) in cores.clone().enumerate() {
                        let block = InputBlock::fetch(input, o, layer, y0, x0, rows, cols);
                        accumulate(core, o, o, &block);
                    }
                } else {
                    for i in 0..layer.in_channels {
                        let block = InputBlock::fetch(input, i, layer, y0, x0, rows, cols);
                        for (core, o) in cores.clone().enumerate() {
                            accumulate(core, o, i, &block);
                        }
                    }
                }
                for (core, o) in cores.clone().enumerate() {
                    for r in 0..rows {
                        for c in 0..cols {
                            let index = (o * out.height + y0 + r) * out.width + x0 + c;
                            data[index] = partial[core][r * cols + c];
                        }
                    }
                }
            }
        }
    }
    if let Some(fault) = fault {
        if let Some(v) = data.get_mut(fault.index) {
            *v = v.wrapping_add(fault.delta);
        }
    }
    Ok(AccTensor {
        shape: out,
        data,
        scale_exponent: input.scale_exponent + weights.scale_exponent,
    })
}

/// Max pooling over int8 values; padded positions are skipped.
pub fn max_pool(input: &QuantTensor, layer: &LayerSpec) -> Result<QuantTensor> {
    if layer.kind != LayerKind::Pool {
        return Err(Error::Contract(format!("{} layer is not a pool", layer.kind.label())));
    }
    let out = layer.output_shape(input.shape).map_err(Error::ShapeMismatch)?;
    let step = layer.dilation + 1;
    let mut data = Vec::with_capacity(out.elements());
    for ch in 0..out.channels {
        for oy in 0..out.height {
            for ox in 0..out.width {
                let mut best: Option<i8> = None;
                for ky in 0..layer.kernel_y {
                    let Some(iy) = source(oy, ky, layer.stride, step, layer.padding.top, input.shape.height)
                    else {
                        continue;
                    };
                    for kx in 0..layer.kernel_x {
                        if let Some(ix) =
                            source(ox, kx, layer.stride, step, layer.padding.left, input.shape.width)
                        {
                            let v = input.get(ch, iy, ix);
                            best = Some(best.map_or(v, |b| b.max(v)));
                        }
                    }
                }
                data.push(best.unwrap_or(0));
            }
        }
    }
    QuantTensor::new(out, data, input.scale_exponent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perfmodel::BlockSize;

    fn tensor(c: usize, h: usize, w: usize, data: Vec<i8>) -> QuantTensor {
        QuantTensor::new(TensorShape::new(c, h, w), data, 0).unwrap()
    }

    #[test]
    fn ones_sum_to_nine() {
        let layer = LayerSpec::conv(1, 1, 3, 3);
        let w = QuantWeights::new(WeightLayout::for_layer(&layer).unwrap(), vec![1; 9], 0).unwrap();
        let acc = conv_oracle(&tensor(1, 3, 3, vec![1; 9]), &w, &layer).unwrap();
        assert_eq!(acc.data, [9]);
    }

    #[test]
    fn identity_kernel() {
        let layer = LayerSpec::conv(1, 1, 3, 3).with_pad(1);
        let mut k = vec![0; 9];
        k[4] = 1;
        let w = QuantWeights::new(WeightLayout::for_layer(&layer).unwrap(), k, 0).unwrap();
        let x = tensor(1, 4, 5, (0..20).map(|v| v as i8 - 10).collect());
        let acc = conv_oracle(&x, &w, &layer).unwrap();
        assert_eq!(acc.data, x.data.iter().map(|&v| v as i32).collect::<Vec<_>>());
    }

    #[test]
    fn dilated_ramp() {
        // Taps at rows/cols {0, 2, 4}: sum over k of (k+1) * (5y + x).
        let layer = LayerSpec::conv(1, 1, 3, 3).with_dilation(1);
        let w = QuantWeights::new(WeightLayout::for_layer(&layer).unwrap(), (1..=9).collect(), 0)
            .unwrap();
        let ramp = tensor(1, 5, 5, (0..25).collect());
        assert_eq!(conv_oracle(&ramp, &w, &layer).unwrap().data, [732]);
        let ones = QuantWeights::new(w.layout, vec![1; 9], 0).unwrap();
        assert_eq!(conv_oracle(&ramp, &ones, &layer).unwrap().data, [108]);
    }

    #[test]
    fn blocked_matches_oracle_on_edges() {
        let hw = HardwareConfig {
            out_block: BlockSize::new(4, 4),
            ..HardwareConfig::proposed()
        };
        let layer = LayerSpec::conv(8, 16, 5, 5).with_pad(2);
        let x = QuantTensor::new(
            TensorShape::new(8, 8, 8),
            (0..512).map(|v| (v * 37 % 251) as i8).collect(),
            -3,
        )
        .unwrap();
        let w = QuantWeights::new(
            WeightLayout::for_layer(&layer).unwrap(),
            (0..3200).map(|v| (v * 13 % 255) as i8).collect(),
            -4,
        )
        .unwrap();
        assert_eq!(
            conv_blocked(&x, &w, &layer, &hw).unwrap(),
            conv_oracle(&x, &w, &layer).unwrap()
        );
    }

    #[test]
    fn fault_changes_one_value() {
        let layer = LayerSpec::depthwise(2, 3, 3).with_pad(1);
        let w = QuantWeights::new(WeightLayout::for_layer(&layer).unwrap(), vec![1; 18], 0).unwrap();
        let x = tensor(2, 3, 3, vec![1; 18]);
        let hw = HardwareConfig::proposed();
        let good = conv_blocked(&x, &w, &layer, &hw).unwrap();
        let bad = conv_blocked_with_fault(&x, &w, &layer, &hw, Some(Fault { index: 10, delta: 1 }))
            .unwrap();
        let diffs: Vec<_> = (0..18).filter(|&i| good.data[i] != bad.data[i]).collect();
        assert_eq!(diffs, [10]);
    }

    #[test]
    fn layout_mismatch_rejected() {
        let layer = LayerSpec::conv(2, 2, 3, 3);
        let dw = LayerSpec::depthwise(2, 3, 3);
        let w = QuantWeights::new(WeightLayout::for_layer(&dw).unwrap(), vec![0; 18], 0).unwrap();
        assert!(conv_oracle(&tensor(2, 3, 3, vec![0; 18]), &w, &layer).is_err());
    }

    #[test]
    fn pooling() {
        let layer = LayerSpec::pool(1, 2, 2);
        let x = tensor(1, 2, 4, vec![1, -3, 4, 2, 0, 5, -1, -2]);
        assert_eq!(max_pool(&x, &layer).unwrap().data, [5, 4]);
    }
}

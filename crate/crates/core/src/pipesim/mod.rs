//! Event-level model of the transfer / multiply / accumulate / ReLU pipeline.
//!
//! A layer is cut into slots. In regular mode a slot is one input channel for
//! one group of `pe_num` output channels; in depthwise mode a slot is one
//! chunk of `pe_num` channels. Slot `k` transfers during period `k`,
//! multiplies during `k + 1` and accumulates during `k + 2`. Regular mode
//! emits ReLU once per group after the last accumulation; depthwise mode runs
//! ReLU as a fourth stage of every chunk.
//!
//! The period is `T = ceil(t_layer / slots)` where `t_layer` is the analytical
//! per-block time. Slot boundaries are paced at `floor(j * t / slots)` so the
//! steady state consumes exactly `t_layer` cycles; when the slots are uniform
//! this is the plain grid `j * T`. Groups and blocks run back to back.

mod trace;

pub use trace::{validate_trace, Chunk, Stage, StageEvent};

use crate::error::{Error, Result};
use crate::netir::{ConvKind, LayerSpec};
use crate::perfmodel::{depthwise_layer_times, regular_layer_times, HardwareConfig, LayerTiming};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineTrace {
    pub layer: LayerSpec,
    /// `Regular` or `Depthwise`; pointwise layers run in regular mode.
    pub mode: ConvKind,
    pub period: u64,
    /// Slowest per-slot term (feature, weight or compute) of a full slot.
    pub bottleneck_period: u64,
    pub blocks: u64,
    /// Back-to-back passes: groups times blocks in regular mode, blocks in
    /// depthwise mode.
    pub passes: u64,
    pub events: Vec<StageEvent>,
    pub total_cycles: u64,
}

/// Paced boundaries of one pass of `slots` slots sharing `cycles`.
struct Pacer {
    origin: u64,
    cycles: u64,
    slots: u64,
    tail: u64,
}

impl Pacer {
    fn new(origin: u64, cycles: u64, slots: u64) -> Self {
        Self {
            origin,
            cycles,
            slots,
            tail: cycles.div_ceil(slots),
        }
    }

    fn at(&self, j: u64) -> u64 {
        let local = if j <= self.slots {
            j * self.cycles / self.slots
        } else {
            self.cycles + (j - self.slots) * self.tail
        };
        self.origin + local
    }
}

fn per_slot_bottleneck(layer: &LayerSpec, hw: &HardwareConfig, depthwise: bool) -> u64 {
    let input = hw.input_block(layer);
    let feature = input.pixels().div_ceil(hw.bw_fm) as u64;
    let weight = (hw.pe_num * layer.taps().div_ceil(hw.bw_w)) as u64;
    let compute = (layer.taps() * hw.out_block.pixels().div_ceil(hw.mac_pe)) as u64;
    let feature = if depthwise { feature * hw.pe_num as u64 } else { feature };
    feature.max(weight).max(compute)
}

fn finish(
    layer: &LayerSpec,
    mode: ConvKind,
    period: u64,
    bottleneck_period: u64,
    blocks: u64,
    passes: u64,
    mut events: Vec<StageEvent>,
) -> PipelineTrace {
    events.sort_by_key(|e| (e.start, e.stage, e.chunk));
    let total_cycles = events.iter().map(|e| e.end).max().unwrap_or(0);
    PipelineTrace {
        layer: *layer,
        mode,
        period,
        bottleneck_period,
        blocks,
        passes,
        events,
        total_cycles,
    }
}

fn check_blocks(blocks: u64) -> Result<()> {
    if blocks == 0 {
        return Err(Error::InvalidArgument("at least one block is required".into()));
    }
    Ok(())
}

pub fn simulate_regular(layer: &LayerSpec, hw: &HardwareConfig, blocks: u64) -> Result<PipelineTrace> {
    check_blocks(blocks)?;
    let timing = regular_layer_times(layer, hw)?;
    let t = timing.t_layer;
    let ic = layer.in_channels as u64;
    let groups = timing.groups;
    let period = t.div_ceil(ic * groups);
    let mut events = Vec::new();
    let mut origin = 0;
    for block in 0..blocks {
        for g in 0..groups {
            let share = (g + 1) * t / groups - g * t / groups;
            let pace = Pacer::new(origin, share, ic);
            for c in 0..ic {
                let chunk = Chunk::slot(block, g, c);
                for (s, stage) in [Stage::Transfer, Stage::Multiply, Stage::Accumulate]
                    .into_iter()
                    .enumerate()
                {
                    let s = s as u64;
                    events.push(StageEvent::new(stage, chunk, pace.at(c + s), pace.at(c + s + 1)));
                }
            }
            events.push(StageEvent::new(
                Stage::Relu,
                Chunk::group(block, g),
                pace.at(ic + 2),
                pace.at(ic + 3),
            ));
            origin = pace.at(ic + 3);
        }
    }
    let bottleneck = per_slot_bottleneck(layer, hw, false);
    Ok(finish(layer, ConvKind::Regular, period, bottleneck, blocks, groups * blocks, events))
}

pub fn simulate_depthwise(layer: &LayerSpec, hw: &HardwareConfig, blocks: u64) -> Result<PipelineTrace> {
    check_blocks(blocks)?;
    let timing = depthwise_layer_times(layer, hw)?;
    let t = timing.t_layer;
    let chunks = timing.groups;
    let period = t.div_ceil(chunks);
    let mut events = Vec::new();
    let mut origin = 0;
    for block in 0..blocks {
        let pace = Pacer::new(origin, t, chunks);
        for k in 0..chunks {
            let chunk = Chunk::group(block, k);
            for (s, stage) in Stage::ALL.into_iter().enumerate() {
                let s = s as u64;
                events.push(StageEvent::new(stage, chunk, pace.at(k + s), pace.at(k + s + 1)));
            }
        }
        origin = pace.at(chunks + 3);
    }
    let bottleneck = per_slot_bottleneck(layer, hw, true);
    Ok(finish(layer, ConvKind::Depthwise, period, bottleneck, blocks, blocks, events))
}

/// Dispatches on the layer's convolution kind.
pub fn simulate(layer: &LayerSpec, hw: &HardwareConfig, blocks: u64) -> Result<PipelineTrace> {
    match layer.conv_kind() {
        Some(ConvKind::Depthwise) => simulate_depthwise(layer, hw, blocks),
        Some(_) => simulate_regular(layer, hw, blocks),
        None => Err(Error::Contract(format!(
            "cannot simulate a {} layer",
            layer.kind.label()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub passed: bool,
    /// `t_layer` times blocks.
    pub analytical: u64,
    pub simulated: u64,
    /// Allowed pipeline fill: `3 T` per pass.
    pub fill_allowance: u64,
    /// `simulated - analytical`; negative when the simulation undercuts.
    pub slack: i64,
}

/// Checks `t_layer <= simulated <= t_layer + 3 T * passes`, both sides
/// scaled to the simulated block count.
pub fn check_against_analytical(
    trace: &PipelineTrace,
    layer: &LayerSpec,
    timing: &LayerTiming,
) -> Result<Verdict> {
    if trace.layer != *layer {
        return Err(Error::Contract("trace was simulated for a different layer".into()));
    }
    let trace_mode_depthwise = trace.mode == ConvKind::Depthwise;
    if trace_mode_depthwise != (timing.kind == ConvKind::Depthwise) {
        return Err(Error::Contract("trace and timing disagree on the layer mode".into()));
    }
    let analytical = timing.t_layer * trace.blocks;
    let fill_allowance = 3 * trace.period * trace.passes;
    let simulated = trace.total_cycles;
    Ok(Verdict {
        passed: analytical <= simulated && simulated <= analytical + fill_allowance,
        analytical,
        simulated,
        fill_allowance,
        slack: simulated as i64 - analytical as i64,
    })
}

use dwaccel::netir::{ConvKind, LayerSpec};
use dwaccel::perfmodel::{layer_times, BlockSize, HardwareConfig};
use dwaccel::pipesim::{check_against_analytical, simulate, validate_trace, PipelineTrace, Stage};
use proptest::prelude::*;
use std::collections::{BTreeMap, HashMap};

/// Replays the events from scratch and returns the makespan, or the first
/// broken rule.
fn replay(trace: &PipelineTrace) -> Result<u64, String> {
    let mut by_stage: HashMap<Stage, Vec<(u64, u64)>> = HashMap::new();
    let mut by_chunk: BTreeMap<String, Vec<(Stage, u64, u64)>> = BTreeMap::new();
    let mut group_accumulate_end: HashMap<(u64, u64), u64> = HashMap::new();
    let mut makespan = 0;
    for e in &trace.events {
        if e.end <= e.start {
            return Err(format!("{} {} has no duration", e.stage, e.chunk));
        }
        makespan = makespan.max(e.end);
        by_stage.entry(e.stage).or_default().push((e.start, e.end));
        by_chunk.entry(e.chunk.to_string()).or_default().push((e.stage, e.start, e.end));
        if e.stage == Stage::Accumulate {
            let end = group_accumulate_end.entry((e.chunk.block, e.chunk.group)).or_default();
            *end = (*end).max(e.end);
        }
    }
    for (stage, mut spans) in by_stage {
        spans.sort();
        if spans.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(format!("{stage} runs two chunks at once"));
        }
    }
    for (chunk, stages) in &by_chunk {
        if stages.windows(2).any(|w| w[1].1 < w[0].2) {
            return Err(format!("{chunk} starts a stage before the previous one ends"));
        }
    }
    if trace.mode == ConvKind::Regular {
        for e in trace.events.iter().filter(|e| e.stage == Stage::Relu) {
            if e.start < group_accumulate_end[&(e.chunk.block, e.chunk.group)] {
                return Err(format!("ReLU of {} before its accumulations", e.chunk));
            }
        }
    }
    Ok(makespan)
}

fn hardware(pe: usize, mac: usize, bw: usize, block: usize) -> HardwareConfig {
    HardwareConfig {
        pe_num: pe,
        mac_pe: mac,
        bw_fm: bw,
        bw_w: bw,
        out_block: BlockSize::new(block, block),
        macs_per_cycle: None,
        ..HardwareConfig::proposed()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simulation_brackets_analytical(
        depthwise in any::<bool>(),
        ic in 1usize..=40, oc in 1usize..=40, k in 1usize..=5,
        pe in 1usize..=16, mac in 1usize..=64, bw in 1usize..=32, block in 1usize..=16,
        blocks in 1u64..=3,
    ) {
        let hw = hardware(pe, mac, bw, block);
        let layer = if depthwise { LayerSpec::depthwise(oc, k, k) } else { LayerSpec::conv(ic, oc, k, k) };
        let timing = layer_times(&layer, &hw).unwrap();
        let trace = simulate(&layer, &hw, blocks).unwrap();

        let groups = oc.div_ceil(pe) as u64;
        let (slots, passes, events) = if depthwise {
            (groups, blocks, 4 * groups * blocks)
        } else {
            let ic = layer.in_channels as u64;
            (ic * groups, groups * blocks, (3 * ic + 1) * groups * blocks)
        };
        let period = timing.t_layer.div_ceil(slots);
        prop_assert_eq!(trace.period, period);
        prop_assert_eq!(trace.passes, passes);
        prop_assert_eq!(trace.events.len() as u64, events);

        let makespan = replay(&trace).map_err(TestCaseError::fail)?;
        prop_assert_eq!(makespan, trace.total_cycles);
        prop_assert!(validate_trace(&trace).is_ok());

        let analytical = timing.t_layer * blocks;
        prop_assert!(analytical <= makespan);
        prop_assert!(makespan <= analytical + 3 * period * passes);
        prop_assert!(check_against_analytical(&trace, &layer, &timing).unwrap().passed);
    }
}

#[test]
fn replay_catches_overlap() {
    let hw = HardwareConfig {
        in_block: Some(BlockSize::new(18, 18)),
        ..HardwareConfig::proposed()
    };
    let layer = LayerSpec::depthwise(16, 3, 3);
    let mut trace = simulate(&layer, &hw, 1).unwrap();
    assert!(replay(&trace).is_ok());
    let second = trace.events.iter().position(|e| e.chunk.group == 1).unwrap();
    trace.events[second].start -= 1;
    assert!(replay(&trace).is_err());
    assert!(validate_trace(&trace).is_err());
}

#[test]
fn uniform_slots_sit_on_the_grid() {
    let hw = HardwareConfig {
        in_block: Some(BlockSize::new(18, 18)),
        ..HardwareConfig::proposed()
    };
    let layer = LayerSpec::conv(4, 8, 3, 3);
    let trace = simulate(&layer, &hw, 1).unwrap();
    let t = trace.period;
    assert_eq!(t, trace.bottleneck_period);
    for e in &trace.events {
        assert_eq!(e.start % t, 0);
        assert_eq!(e.end - e.start, t);
    }
    assert_eq!(trace.total_cycles, 7 * t);
}

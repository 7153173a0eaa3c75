use dwaccel::configs::{self, CHECKPOINT_BYTES_PER_WEIGHT, CONTEXT_TAG};
use dwaccel::costmodel::{composite_cost_report, ddc_rewrite_composite};
use dwaccel::csvio;
use dwaccel::netir::{parse_model, CompositeNetwork, ConvKind, TensorShape};
use dwaccel::perfmodel::{comparison_sweep, composite_network_time, HardwareConfig};
use dwaccel::pipesim::simulate;
use num_rational::Ratio;
use serde::Serialize;

fn load(name: &str) -> CompositeNetwork {
    parse_model(configs::bundled(name).unwrap()).unwrap().to_composite()
}

/// (weights, MACs per input pixel) from a hand-written layer table. `div`
/// is the ratio of input pixels to the layer's output pixels.
fn table(rows: &[(u64, u64)]) -> (u64, Ratio<u64>) {
    rows.iter()
        .fold((0, Ratio::from_integer(0)), |(w, m), &(weights, div)| (w + weights, m + Ratio::new(weights, div)))
}

fn conv(ic: u64, oc: u64, k: u64, div: u64) -> (u64, u64) {
    (k * k * ic * oc, div)
}

fn dw(c: u64, div: u64) -> (u64, u64) {
    (9 * c, div)
}

fn backbone() -> Vec<(u64, u64)> {
    let mut rows = vec![conv(3, 8, 3, 4)];
    let stages = [(8, 16, 4), (16, 32, 16), (32, 32, 16), (32, 64, 64), (64, 64, 64), (64, 128, 256)]
        .into_iter()
        .chain([(128, 128, 256); 5])
        .chain([(128, 256, 1024), (256, 256, 1024)]);
    for (ic, oc, div) in stages {
        rows.push(dw(ic, div));
        rows.push(conv(ic, oc, 1, div));
    }
    rows
}

fn context(div: u64) -> Vec<(u64, u64)> {
    vec![conv(64, 32, 3, div), conv(64, 16, 3, div), conv(16, 16, 3, div), conv(16, 16, 3, div), conv(16, 16, 3, div)]
}

fn context_ddc(div: u64) -> Vec<(u64, u64)> {
    vec![dw(64, div), conv(64, 32, 1, div), dw(64, div), conv(64, 16, 1, div), dw(64, div), conv(64, 16, 1, div)]
}

fn detector(ddc: bool) -> Vec<(u64, u64)> {
    let mut rows = backbone();
    rows.extend([conv(64, 64, 1, 64), conv(128, 64, 1, 256), conv(256, 64, 1, 1024)]);
    rows.extend([conv(64, 64, 3, 256), conv(64, 64, 3, 64)]);
    for div in [64, 256, 1024] {
        rows.extend(if ddc { context_ddc(div) } else { context(div) });
        rows.push(conv(64, 32, 1, div));
    }
    rows
}

#[test]
fn context_module_matches_table() {
    let levels: Vec<(u64, u64)> = [64, 256, 1024].iter().flat_map(|&d| context(d)).collect();
    let (_, macs) = table(&levels);
    let (weights, _) = table(&context(64));
    let report = composite_cost_report(&load("context-module"), CHECKPOINT_BYTES_PER_WEIGHT);
    assert_eq!(report.totals.macs_per_input_pixel, macs);
    assert_eq!(report.totals.weight_bytes, weights * CHECKPOINT_BYTES_PER_WEIGHT);

    let levels: Vec<(u64, u64)> = [64, 256, 1024].iter().flat_map(|&d| context_ddc(d)).collect();
    let (_, macs) = table(&levels);
    let (weights, _) = table(&context_ddc(64));
    let report = composite_cost_report(&load("context-module-ddc"), CHECKPOINT_BYTES_PER_WEIGHT);
    assert_eq!(report.totals.macs_per_input_pixel, macs);
    assert_eq!(report.totals.weight_bytes, weights * CHECKPOINT_BYTES_PER_WEIGHT);
}

#[test]
fn detector_matches_table() {
    for (name, ddc) in [("retinaface-mnet025", false), ("retinaface-mnet025-ddc", true)] {
        let (weights, macs) = table(&detector(ddc));
        let report = composite_cost_report(&load(name), 1);
        assert_eq!(report.totals.macs_per_input_pixel, macs, "{name}");
        assert_eq!(report.totals.weight_bytes, weights, "{name}");
    }
    let (bb_weights, bb_macs) = table(&backbone());
    let report = composite_cost_report(&load("retinaface-mnet025"), 1);
    assert_eq!(report.subtotal("backbone").macs_per_input_pixel, bb_macs);
    assert_eq!(report.subtotal("backbone").weight_bytes, bb_weights);
}

#[test]
fn shipped_rewrites_are_current() {
    let rules = configs::context_rules();
    for (base, ddc) in [("context-module", "context-module-ddc"), ("retinaface-mnet025", "retinaface-mnet025-ddc")] {
        let fresh = ddc_rewrite_composite(&load(base), &rules, Some(CONTEXT_TAG)).unwrap();
        let shipped = load(ddc);
        let a = composite_cost_report(&fresh, 1);
        let b = composite_cost_report(&shipped, 1);
        assert_eq!(a.totals, b.totals, "{ddc}");
        for (x, y) in fresh.segments().iter().zip(shipped.segments()) {
            assert_eq!(x.network.layers(), y.network.layers());
            assert_eq!(x.network.receptive_field(), y.network.receptive_field());
        }
    }
}

#[test]
fn every_bundled_model_times() {
    let hw = HardwareConfig::proposed();
    for name in configs::bundled_names() {
        let report = composite_network_time(&load(name), &hw).unwrap();
        assert!(report.total_cycles > 0, "{name}");
        let summed: u64 = report.per_layer.iter().map(|l| l.total).sum();
        assert_eq!(summed, report.total_cycles, "{name}");
    }
}

fn body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

fn reserialize<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[test]
fn csv_tables_round_trip_byte_for_byte() {
    let net = load("retinaface-mnet025");
    let hw = HardwareConfig::proposed();

    let mut buf = Vec::new();
    csvio::write_cost_csv(&mut buf, &composite_cost_report(&net, 1)).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows = csvio::read_cost_csv(text.as_bytes()).unwrap();
    assert_eq!(reserialize(&rows), body(&text));

    let mut buf = Vec::new();
    csvio::write_timing_csv(&mut buf, &composite_network_time(&net, &hw).unwrap()).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows = csvio::read_timing_csv(text.as_bytes()).unwrap();
    assert_eq!(reserialize(&rows), body(&text));
    assert_eq!(csvio::read_metadata(&text)["total_cycles"], rows.last().unwrap().total.to_string());

    let sweep = comparison_sweep(&hw, &HardwareConfig::related_yu(), ConvKind::Depthwise, 5, 5, &[8, 16, 24]).unwrap();
    let mut buf = Vec::new();
    csvio::write_sweep_csv(&mut buf, &sweep).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows = csvio::read_sweep_csv(text.as_bytes()).unwrap();
    assert_eq!(reserialize(&rows), body(&text));
    assert!(csvio::read_metadata(&text)["note"].contains("approximate"));

    let layer = net.segments()[0].network.layers()[2];
    let trace = simulate(&layer, &hw, 2).unwrap();
    let mut buf = Vec::new();
    csvio::write_trace_csv(&mut buf, &trace).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows = csvio::read_trace_csv(text.as_bytes()).unwrap();
    assert_eq!(reserialize(&rows), body(&text));
    for (row, event) in rows.iter().zip(&trace.events) {
        assert_eq!((row.stage().unwrap(), row.chunk().unwrap()), (event.stage, event.chunk));
    }
}

#[test]
fn fig1_block_frame() {
    let net = load("fig1-block");
    assert_eq!(net.input_shape(), TensorShape::new(64, 60, 80));
}

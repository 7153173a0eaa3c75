//! Command-line front end.
//!
//! Exit status: 0 success, 1 invalid input, 2 failed consistency check.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dwaccel::configs;
use dwaccel::costmodel::{self, CostReport, RewriteRule};
use dwaccel::csvio;
use dwaccel::funcsim::{self, Fault};
use dwaccel::netir::{self, CompositeNetwork, ConvKind, LayerSpec, Model, TensorShape};
use dwaccel::perfmodel::{self, ArchModel, HardwareConfig, TimingReport};
use dwaccel::pipesim;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dwaccel", version, about = "Cost, timing and pipeline models for a dual-mode CNN accelerator")]
struct Cli {
    /// Hardware profile name or JSON file.
    #[arg(long, global = true, default_value = "proposed")]
    hw: String,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Seed for generated tensors and weights.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output file (a directory for multi-table `compare`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// MACs per input pixel and weight bytes per layer.
    ReportCost(ReportCost),
    /// Per-layer cycle counts and network totals.
    ReportTime(ReportTime),
    /// Compute time against channel count for both architectures.
    Compare(Compare),
    /// Pipeline trace of one convolution layer.
    Simulate(Simulate),
    /// Replace 3x3 cascades with dilated depthwise plus pointwise layers.
    Rewrite(Rewrite),
    /// Blocked against naive int8 execution on seeded random data.
    Check(Check),
}

#[derive(Args)]
struct ReportCost {
    /// Network file or bundled config name.
    network: String,
    #[arg(long, default_value_t = costmodel::DEFAULT_BYTES_PER_WEIGHT)]
    bytes_per_weight: u64,
}

#[derive(Args)]
struct ReportTime {
    network: String,
    /// Frame as HxW or CxHxW; sequential networks only.
    #[arg(long)]
    frame: Option<String>,
    /// Network whose cycles the report is compared against.
    #[arg(long)]
    baseline: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Regular,
    Depthwise,
    All,
}

#[derive(Args)]
struct Compare {
    #[arg(long, value_enum, default_value_t = KindArg::All)]
    kind: KindArg,
    /// Square kernel sizes, comma separated.
    #[arg(long, default_value = "3,5")]
    kernel: String,
    /// `start:end:step` or a comma-separated list.
    #[arg(long, default_value = "8:256:8")]
    channels: String,
    /// Profile or file for the related design.
    #[arg(long, default_value = "related-yu")]
    related_hw: String,
    /// Print the utilization table instead of the sweep.
    #[arg(long)]
    utilization: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Auto,
    Regular,
    Depthwise,
}

#[derive(Args)]
struct Simulate {
    /// Network file or bundled config name.
    network: Option<String>,
    /// Layer index, or `segment:index` for composite networks. Defaults to
    /// the first convolution.
    #[arg(long)]
    layer: Option<String>,
    /// A single layer as a JSON object instead of a network.
    #[arg(long, conflicts_with = "network")]
    spec: Option<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    blocks: u64,
    /// Simulate every block of the layer's output.
    #[arg(long, conflicts_with = "blocks")]
    full_frame: bool,
}

#[derive(Args)]
struct Rewrite {
    network: String,
    /// Cascade lengths to replace.
    #[arg(long, default_value = "2,3")]
    rules: String,
    /// Only rewrite segments with this tag.
    #[arg(long)]
    tag: Option<String>,
    /// Omit the pointwise layer; only cascades keeping the channel count match.
    #[arg(long)]
    depthwise_only: bool,
    #[arg(long, default_value_t = costmodel::DEFAULT_BYTES_PER_WEIGHT)]
    bytes_per_weight: u64,
}

#[derive(Args)]
struct Check {
    network: String,
    /// Perturb one blocked output as LAYER:INDEX (negative control).
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

/// Returns `false` when a consistency check failed.
fn run(cli: &Cli) -> Result<bool> {
    let hw = load_hw(&cli.hw)?;
    match &cli.command {
        Command::ReportCost(args) => report_cost(cli, args),
        Command::ReportTime(args) => report_time(cli, &hw, args),
        Command::Compare(args) => compare(cli, &hw, args),
        Command::Simulate(args) => simulate(cli, &hw, args),
        Command::Rewrite(args) => rewrite(cli, args),
        Command::Check(args) => check(cli, &hw, args),
    }
}

fn load_hw(name: &str) -> Result<HardwareConfig> {
    if let Some(hw) = HardwareConfig::profile(name) {
        return Ok(hw);
    }
    let text = std::fs::read_to_string(name).with_context(|| {
        format!(
            "`{name}` is neither a profile ({}) nor a readable file",
            HardwareConfig::profile_names().join(", ")
        )
    })?;
    HardwareConfig::from_json(&text).with_context(|| format!("hardware file `{name}`"))
}

fn load_model(name: &str) -> Result<Model> {
    let text = if Path::new(name).exists() {
        std::fs::read_to_string(name).with_context(|| format!("reading `{name}`"))?
    } else if let Some(text) = configs::bundled(name) {
        text.to_string()
    } else {
        bail!(
            "no file `{name}` and no bundled config of that name ({})",
            configs::bundled_names().join(", ")
        );
    };
    netir::parse_model(&text).with_context(|| format!("network `{name}`"))
}

fn emit(cli: &Cli, bytes: &[u8]) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing `{}`", path.display())),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn cost_of(model: &Model, bytes_per_weight: u64) -> CostReport {
    match model {
        Model::Single(net) => costmodel::cost_report(net, bytes_per_weight),
        Model::Composite(net) => costmodel::composite_cost_report(net, bytes_per_weight),
    }
}

fn report_cost(cli: &Cli, args: &ReportCost) -> Result<bool> {
    let model = load_model(&args.network)?;
    let report = cost_of(&model, args.bytes_per_weight);
    let mut buf = Vec::new();
    match cli.format {
        Format::Csv => csvio::write_cost_csv(&mut buf, &report)?,
        Format::Text => {
            let rows: Vec<Vec<String>> = csvio::cost_rows(&report)
                .into_iter()
                .map(|r| {
                    vec![
                        r.layer,
                        opt(r.kind),
                        opt(r.kx.zip(r.ky).map(|(x, y)| format!("{x}x{y}"))),
                        opt(r.dilation),
                        opt(r.ic),
                        opt(r.oc),
                        format!("{:.4}", r.macs_per_input_pixel),
                        r.weight_bytes.to_string(),
                    ]
                })
                .collect();
            writeln!(buf, "{} ({} byte(s) per weight)", report.name, report.bytes_per_weight)?;
            buf.extend(
                table(&["layer", "kind", "kernel", "d", "ic", "oc", "MACs/px", "bytes"], &rows).bytes(),
            );
        }
    }
    emit(cli, &buf)?;
    Ok(true)
}

fn parse_frame(text: &str, channels: usize) -> Result<TensorShape> {
    let parts: Vec<usize> = text
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow!("frame `{text}` is not HxW or CxHxW"))?;
    match parts[..] {
        [h, w] => Ok(TensorShape::new(channels, h, w)),
        [c, h, w] => Ok(TensorShape::new(c, h, w)),
        _ => bail!("frame `{text}` is not HxW or CxHxW"),
    }
}

fn time_model(model: &Model, hw: &HardwareConfig, frame: Option<&str>) -> Result<TimingReport> {
    Ok(match model {
        Model::Single(net) => {
            let frame = frame
                .map(|f| parse_frame(f, net.input_shape().channels))
                .transpose()?;
            perfmodel::network_time(net, hw, frame)?
        }
        Model::Composite(net) => {
            if frame.is_some() {
                bail!("--frame applies to sequential networks only");
            }
            perfmodel::composite_network_time(net, hw)?
        }
    })
}

/// Cycle ratio the DDC detector is expected to reach against its baseline.
const REFERENCE_CYCLE_RATIO: f64 = 0.83;

fn report_time(cli: &Cli, hw: &HardwareConfig, args: &ReportTime) -> Result<bool> {
    let model = load_model(&args.network)?;
    let report = time_model(&model, hw, args.frame.as_deref())?;
    let mut buf = Vec::new();
    match cli.format {
        Format::Csv => csvio::write_timing_csv(&mut buf, &report)?,
        Format::Text => {
            let rows: Vec<Vec<String>> = csvio::timing_rows(&report)
                .into_iter()
                .map(|r| {
                    vec![
                        r.layer,
                        opt(r.t_mem),
                        opt(r.t_comp),
                        opt(r.t_layer),
                        opt(r.bound),
                        opt(r.blocks),
                        r.total.to_string(),
                    ]
                })
                .collect();
            writeln!(buf, "{} on `{}`", report.name, hw.name)?;
            buf.extend(
                table(&["layer", "t_mem", "t_comp", "t_layer", "bound", "blocks", "total"], &rows).bytes(),
            );
            match report.fps {
                Some(fps) => writeln!(buf, "fps {fps:.2}")?,
                None => writeln!(buf, "fps n/a")?,
            }
            for note in &report.notes {
                writeln!(buf, "note: {note}")?;
            }
        }
    }
    if let Some(baseline) = &args.baseline {
        let base_model = load_model(baseline)?;
        let base = time_model(&base_model, hw, args.frame.as_deref())?;
        let ratio = report.total_cycles as f64 / base.total_cycles.max(1) as f64;
        writeln!(
            buf,
            "# baseline={} baseline_cycles={} cycles={} ratio={ratio:.4} reference_ratio={REFERENCE_CYCLE_RATIO:.2} below_baseline={}",
            base.name.replace(' ', "_"),
            base.total_cycles,
            report.total_cycles,
            report.total_cycles < base.total_cycles
        )?;
    }
    emit(cli, &buf)?;
    Ok(true)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    if text.is_empty() {
        bail!("empty {what} list");
    }
    let bad = || anyhow!("malformed {what} `{text}`");
    let values: Vec<usize> = if text.contains(':') {
        let parts: Vec<usize> = text
            .split(':')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let (start, end, step) = match parts[..] {
            [s, e] => (s, e, 1),
            [s, e, st] => (s, e, st),
            _ => return Err(bad()),
        };
        if step == 0 {
            return Err(bad());
        }
        (start..=end).step_by(step).collect()
    } else {
        text.split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?
    };
    if values.is_empty() {
        bail!("empty {what} range `{text}`");
    }
    Ok(values)
}

fn compare(cli: &Cli, hw: &HardwareConfig, args: &Compare) -> Result<bool> {
    let kernels = parse_list(&args.kernel, "kernel")?;
    if args.utilization {
        return utilization_table(cli, &kernels);
    }
    let related = load_hw(&args.related_hw)?;
    let channels = parse_list(&args.channels, "channel")?;
    let kinds = match args.kind {
        KindArg::Regular => vec![ConvKind::Regular],
        KindArg::Depthwise => vec![ConvKind::Depthwise],
        KindArg::All => vec![ConvKind::Regular, ConvKind::Depthwise],
    };
    let mut tables = Vec::new();
    for &kind in &kinds {
        for &k in &kernels {
            let table = perfmodel::comparison_sweep(hw, &related, kind, k, k, &channels)?;
            let mut buf = Vec::new();
            match cli.format {
                Format::Csv => csvio::write_sweep_csv(&mut buf, &table)?,
                Format::Text => {
                    writeln!(buf, "{} {k}x{k} ({})", kind.label(), table.note)?;
                    let rows: Vec<Vec<String>> = table
                        .points
                        .iter()
                        .map(|p| {
                            vec![
                                p.channels.to_string(),
                                p.t_proposed.to_string(),
                                p.t_related.to_string(),
                            ]
                        })
                        .collect();
                    buf.extend(sweep_table(&rows).bytes());
                }
            }
            tables.push((format!("sweep_{}_{k}x{k}.csv", kind.label()), buf));
        }
    }
    if tables.len() == 1 {
        emit(cli, &tables[0].1)?;
    } else if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
        for (name, buf) in &tables {
            std::fs::write(dir.join(name), buf)?;
        }
    } else {
        let joined: Vec<u8> = tables
            .iter()
            .map(|(_, b)| b.clone())
            .collect::<Vec<_>>()
            .join(&b"\n"[..]);
        std::io::stdout().write_all(&joined)?;
    }
    Ok(true)
}

fn sweep_table(rows: &[Vec<String>]) -> String {
    table(&["channels", "t_proposed", "t_related"], rows)
}

fn utilization_table(cli: &Cli, kernels: &[usize]) -> Result<bool> {
    let models = [
        ArchModel::Liu { t_m: 8 },
        ArchModel::Su,
        ArchModel::Yu { alpha: None },
        ArchModel::Proposed,
    ];
    let mut rows = Vec::new();
    for &k in kernels {
        for kind in [ConvKind::Regular, ConvKind::Depthwise] {
            for model in models {
                let u = perfmodel::utilization(model, kind, k as u64, k as u64);
                rows.push(vec![
                    model.label().to_string(),
                    kind.label().to_string(),
                    format!("{k}x{k}"),
                    format!("{}/{}", u.numer(), u.denom()),
                    perfmodel::percent(u).to_string(),
                ]);
            }
        }
    }
    let headers = ["model", "kind", "kernel", "utilization", "percent"];
    let text = match cli.format {
        Format::Text => table(&headers, &rows),
        Format::Csv => {
            let mut s = headers.join(",") + "\n";
            for row in rows {
                s += &(row.join(",") + "\n");
            }
            s
        }
    };
    emit(cli, text.as_bytes())?;
    Ok(true)
}

fn pick_layer(model: &Model, selector: Option<&str>) -> Result<(String, LayerSpec, TensorShape)> {
    let net = model.to_composite();
    let candidates: Vec<(String, &LayerSpec, TensorShape)> = net
        .segments()
        .iter()
        .flat_map(|seg| {
            let composite = matches!(model, Model::Composite(_));
            seg.network.layers().iter().enumerate().map(move |(i, l)| {
                let id = if composite { format!("{}:{i}", seg.name) } else { i.to_string() };
                (id, l, seg.network.layer_output(i))
            })
        })
        .collect();
    let found = match selector {
        Some(sel) => candidates.into_iter().find(|(id, _, _)| id == sel),
        None => candidates.into_iter().find(|(_, l, _)| l.is_conv()),
    };
    let (id, layer, out) = found.ok_or_else(|| match selector {
        Some(sel) => anyhow!("no layer `{sel}`"),
        None => anyhow!("network has no convolution layer"),
    })?;
    Ok((id, *layer, out))
}

fn simulate(cli: &Cli, hw: &HardwareConfig, args: &Simulate) -> Result<bool> {
    let (id, layer, output) = match (&args.spec, &args.network) {
        (Some(spec), _) => {
            let layer = netir::parse_layer(spec, hw.out_block.h, hw.out_block.w)?;
            let out = TensorShape::new(layer.out_channels, hw.out_block.h, hw.out_block.w);
            ("spec".to_string(), layer, out)
        }
        (None, Some(network)) => pick_layer(&load_model(network)?, args.layer.as_deref())?,
        (None, None) => bail!("give a network file or --spec"),
    };
    let blocks = if args.full_frame { hw.blocks(output) } else { args.blocks };
    let trace = match args.mode {
        ModeArg::Auto => pipesim::simulate(&layer, hw, blocks)?,
        ModeArg::Regular => pipesim::simulate_regular(&layer, hw, blocks)?,
        ModeArg::Depthwise => pipesim::simulate_depthwise(&layer, hw, blocks)?,
    };
    if let Err(msg) = pipesim::validate_trace(&trace) {
        eprintln!("inconsistent trace: {msg}");
        return Ok(false);
    }
    let timing = perfmodel::layer_times(&layer, hw)?;
    let verdict = pipesim::check_against_analytical(&trace, &layer, &timing)?;
    let mut buf = Vec::new();
    match cli.format {
        Format::Csv => csvio::write_trace_csv(&mut buf, &trace)?,
        Format::Text => {
            writeln!(
                buf,
                "layer {id} ({}), period {} cycles, {} passes, total {} cycles",
                layer.kind.label(),
                trace.period,
                trace.passes,
                trace.total_cycles
            )?;
            let rows: Vec<Vec<String>> = trace
                .events
                .iter()
                .map(|e| {
                    vec![
                        e.stage.to_string(),
                        e.chunk.to_string(),
                        e.start.to_string(),
                        e.end.to_string(),
                    ]
                })
                .collect();
            buf.extend(table(&["stage", "chunk", "start", "end"], &rows).bytes());
        }
    }
    writeln!(
        buf,
        "# layer={id} verdict={} analytical={} simulated={} fill_allowance={} slack={}",
        if verdict.passed { "pass" } else { "fail" },
        verdict.analytical,
        verdict.simulated,
        verdict.fill_allowance,
        verdict.slack
    )?;
    emit(cli, &buf)?;
    Ok(verdict.passed)
}

fn rewrite(cli: &Cli, args: &Rewrite) -> Result<bool> {
    let model = load_model(&args.network)?;
    let rules = parse_list(&args.rules, "rule")?
        .into_iter()
        .map(|n| {
            RewriteRule::new(n).map(|r| RewriteRule {
                insert_pointwise: !args.depthwise_only,
                ..r
            })
        })
        .collect::<dwaccel::Result<Vec<_>>>()?;
    let (rewritten, document) = match &model {
        Model::Single(net) => {
            if args.tag.is_some() {
                bail!("--tag applies to composite networks only");
            }
            let out = costmodel::ddc_rewrite(net, &rules)?;
            let doc = netir::to_json(&out);
            (Model::Single(out), doc)
        }
        Model::Composite(net) => {
            let out = costmodel::ddc_rewrite_composite(net, &rules, args.tag.as_deref())?;
            let doc = netir::composite_to_json(&out);
            (Model::Composite(out), doc)
        }
    };
    let before = cost_of(&model, args.bytes_per_weight);
    let after = cost_of(&rewritten, args.bytes_per_weight);
    let mut report = String::new();
    let change = |a: f64, b: f64| if a == 0.0 { 0.0 } else { 100.0 * (b - a) / a };
    let (ma, mb) = (before.totals.macs_per_pixel_f64(), after.totals.macs_per_pixel_f64());
    report += &format!("macs_per_input_pixel {ma:.4} -> {mb:.4} ({:+.1}%)\n", change(ma, mb));
    let (ba, bb) = (before.totals.weight_bytes, after.totals.weight_bytes);
    report += &format!("weight_bytes {ba} -> {bb} ({:+.1}%)\n", change(ba as f64, bb as f64));
    for tag in before.tags() {
        let (a, b) = (before.subtotal(&tag), after.subtotal(&tag));
        report += &format!(
            "{tag}: macs_per_input_pixel {:.4} -> {:.4}, weight_bytes {} -> {}\n",
            a.macs_per_pixel_f64(),
            b.macs_per_pixel_f64(),
            a.weight_bytes,
            b.weight_bytes
        );
    }
    let mut consistent = true;
    let (old, new) = (model.to_composite(), rewritten.to_composite());
    for (a, b) in old.segments().iter().zip(new.segments()) {
        let (ra, rb) = (a.network.receptive_field(), b.network.receptive_field());
        consistent &= ra == rb && a.network.output_shape() == b.network.output_shape();
        report += &format!("rf {}: {}x{} -> {}x{}\n", a.name, ra.y, ra.x, rb.y, rb.x);
    }
    match &cli.out {
        Some(path) => {
            std::fs::write(path, document + "\n")?;
            print!("{report}");
        }
        None => {
            println!("{document}");
            eprint!("{report}");
        }
    }
    if !consistent {
        eprintln!("rewrite changed a receptive field or output shape");
    }
    Ok(consistent)
}

fn parse_fault(text: &str) -> Result<(usize, Fault)> {
    let (layer, index) = text
        .split_once(':')
        .ok_or_else(|| anyhow!("fault must be LAYER:INDEX"))?;
    Ok((
        layer.parse().context("fault layer")?,
        Fault {
            index: index.parse().context("fault index")?,
            delta: 1,
        },
    ))
}

fn check(cli: &Cli, hw: &HardwareConfig, args: &Check) -> Result<bool> {
    let model = load_model(&args.network)?;
    let fault = args.inject_fault.as_deref().map(parse_fault).transpose()?;
    let net: CompositeNetwork = model.to_composite();
    let mut lines = String::new();
    let mut conv_layers = 0;
    for (s, seg) in net.segments().iter().enumerate() {
        let seed = cli.seed.wrapping_add(s as u64);
        let input = funcsim::random_tensor(seg.network.input_shape(), seed);
        let params = funcsim::random_params(&seg.network, seed)?;
        let seg_fault = if s == 0 { fault } else { None };
        if let Some(m) = funcsim::compare_orders(&input, &seg.network, &params, hw, seg_fault)? {
            let prefix = if matches!(model, Model::Composite(_)) {
                format!("segment {} ", seg.name)
            } else {
                String::new()
            };
            lines += &format!(
                "fail: {prefix}layer {} channel {} y {} x {}: oracle {} blocked {}\n",
                m.layer, m.channel, m.y, m.x, m.oracle, m.blocked
            );
            emit(cli, lines.as_bytes())?;
            return Ok(false);
        }
        conv_layers += seg.network.layers().iter().filter(|l| l.is_conv()).count();
    }
    lines += &format!(
        "pass: {conv_layers} convolution layer(s) bit-identical in blocked and naive order (seed {})\n",
        cli.seed
    );
    emit(cli, lines.as_bytes())?;
    Ok(true)
}

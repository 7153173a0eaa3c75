//! Plot-ready CSV tables and their readers.
//!
//! Decimal columns carry six fractional digits. Lines starting with `#` are
//! metadata (mode, period, notes) and are skipped by the row readers;
//! [`read_metadata`] collects their `key=value` pairs.

use crate::costmodel::CostReport;
use crate::error::Result;
use crate::perfmodel::{SweepTable, TimingReport};
use crate::pipesim::{Chunk, PipelineTrace, Stage};
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize, Serializer};
use std::collections::BTreeMap;
use std::io::{Read, Write};

fn six<S: Serializer>(value: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{value:.6}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    /// Layer index, `segment:index`, `total` or `total:<tag>`.
    pub layer: String,
    pub kind: Option<String>,
    pub kx: Option<usize>,
    pub ky: Option<usize>,
    pub dilation: Option<usize>,
    pub ic: Option<usize>,
    pub oc: Option<usize>,
    #[serde(serialize_with = "six")]
    pub macs_per_input_pixel: f64,
    pub weight_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub layer: String,
    pub t_mem: Option<u64>,
    pub t_comp: Option<u64>,
    pub t_layer: Option<u64>,
    pub bound: Option<String>,
    pub blocks: Option<u64>,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub channels: usize,
    pub t_proposed: u64,
    pub t_related: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage: String,
    pub chunk: String,
    pub start: u64,
    pub end: u64,
}

impl TraceRow {
    pub fn stage(&self) -> std::result::Result<Stage, String> {
        self.stage.parse()
    }

    pub fn chunk(&self) -> std::result::Result<Chunk, String> {
        self.chunk.parse()
    }
}

fn write_comment<W: Write>(out: &mut W, pairs: &[(&str, String)]) -> Result<()> {
    let body: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(out, "# {}", body.join(" "))?;
    Ok(())
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let rows = reader.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

/// `key=value` pairs of all `#` lines; later keys win. A `# note:` line is
/// kept whole under `note`.
pub fn read_metadata(text: &str) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
        let line = line.trim();
        if let Some(note) = line.strip_prefix("note:") {
            meta.insert("note".to_string(), note.trim().to_string());
            continue;
        }
        for pair in line.split_whitespace() {
            if let Some((k, v)) = pair.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
        }
    }
    meta
}

pub fn cost_rows(report: &CostReport) -> Vec<CostRow> {
    let mut rows: Vec<CostRow> = report
        .per_layer
        .iter()
        .map(|l| CostRow {
            layer: l.id(),
            kind: Some(l.kind.label().to_string()),
            kx: Some(l.kx),
            ky: Some(l.ky),
            dilation: Some(l.dilation),
            ic: Some(l.ic),
            oc: Some(l.oc),
            macs_per_input_pixel: l.macs_per_input_pixel.to_f64().unwrap_or(f64::NAN),
            weight_bytes: l.weight_bytes,
        })
        .collect();
    let total = |layer: String, t: crate::costmodel::CostTotals| CostRow {
        layer,
        kind: None,
        kx: None,
        ky: None,
        dilation: None,
        ic: None,
        oc: None,
        macs_per_input_pixel: t.macs_per_pixel_f64(),
        weight_bytes: t.weight_bytes,
    };
    for tag in report.tags() {
        rows.push(total(format!("total:{tag}"), report.subtotal(&tag)));
    }
    rows.push(total("total".into(), report.totals));
    rows
}

pub fn write_cost_csv<W: Write>(mut out: W, report: &CostReport) -> Result<()> {
    write_comment(
        &mut out,
        &[
            ("network", report.name.replace(' ', "_")),
            ("bytes_per_weight", report.bytes_per_weight.to_string()),
            ("input_pixels", report.input_pixels.to_string()),
        ],
    )?;
    write_rows(out, &cost_rows(report))
}

pub fn read_cost_csv<R: Read>(input: R) -> Result<Vec<CostRow>> {
    read_rows(input)
}

pub fn timing_rows(report: &TimingReport) -> Vec<TimingRow> {
    let mut rows: Vec<TimingRow> = report
        .per_layer
        .iter()
        .map(|l| TimingRow {
            layer: l.id(),
            t_mem: l.timing.map(|t| t.t_mem),
            t_comp: l.timing.map(|t| t.t_comp),
            t_layer: l.timing.map(|t| t.t_layer),
            bound: l.timing.map(|t| t.bound.label().to_string()),
            blocks: Some(l.blocks),
            total: l.total,
        })
        .collect();
    rows.push(TimingRow {
        layer: "total".into(),
        t_mem: None,
        t_comp: None,
        t_layer: None,
        bound: None,
        blocks: None,
        total: report.total_cycles,
    });
    rows
}

pub fn write_timing_csv<W: Write>(mut out: W, report: &TimingReport) -> Result<()> {
    let fps = report.fps.map_or("none".to_string(), |f| format!("{f:.6}"));
    write_comment(
        &mut out,
        &[
            ("network", report.name.replace(' ', "_")),
            ("clock_hz", report.clock_hz.to_string()),
            ("total_cycles", report.total_cycles.to_string()),
            ("fps", fps),
        ],
    )?;
    for note in &report.notes {
        writeln!(out, "# note: {note}")?;
    }
    write_rows(out, &timing_rows(report))
}

pub fn read_timing_csv<R: Read>(input: R) -> Result<Vec<TimingRow>> {
    read_rows(input)
}

pub fn sweep_rows(table: &SweepTable) -> Vec<SweepRow> {
    table
        .points
        .iter()
        .map(|p| SweepRow {
            channels: p.channels,
            t_proposed: p.t_proposed,
            t_related: p.t_related,
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(mut out: W, table: &SweepTable) -> Result<()> {
    write_comment(
        &mut out,
        &[
            ("kind", table.kind.label().to_string()),
            ("kernel", format!("{}x{}", table.kernel_x, table.kernel_y)),
            ("related", "approximate".to_string()),
        ],
    )?;
    writeln!(out, "# note: {}", table.note)?;
    write_rows(out, &sweep_rows(table))
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    read_rows(input)
}

pub fn trace_rows(trace: &PipelineTrace) -> Vec<TraceRow> {
    trace
        .events
        .iter()
        .map(|e| TraceRow {
            stage: e.stage.to_string(),
            chunk: e.chunk.to_string(),
            start: e.start,
            end: e.end,
        })
        .collect()
}

pub fn write_trace_csv<W: Write>(mut out: W, trace: &PipelineTrace) -> Result<()> {
    let mode = if trace.mode == crate::netir::ConvKind::Depthwise {
        "depthwise"
    } else {
        "regular"
    };
    write_comment(
        &mut out,
        &[
            ("mode", mode.to_string()),
            ("period", trace.period.to_string()),
            ("bottleneck_period", trace.bottleneck_period.to_string()),
            ("blocks", trace.blocks.to_string()),
            ("passes", trace.passes.to_string()),
            ("total", trace.total_cycles.to_string()),
        ],
    )?;
    write_rows(out, &trace_rows(trace))
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    read_rows(input)
}

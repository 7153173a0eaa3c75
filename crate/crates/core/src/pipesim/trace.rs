use crate::netir::ConvKind;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Transfer,
    Multiply,
    Accumulate,
    Relu,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Transfer, Stage::Multiply, Stage::Accumulate, Stage::Relu];

    pub fn label(&self) -> &'static str {
        match self {
            Stage::Transfer => "transfer",
            Stage::Multiply => "multiply",
            Stage::Accumulate => "accumulate",
            Stage::Relu => "relu",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|stage| stage.label() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Work unit of an event: spatial block, channel group (output group in
/// regular mode, channel chunk in depthwise mode) and, for regular slots,
/// the input channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Chunk {
    pub block: u64,
    pub group: u64,
    pub input_channel: Option<u64>,
}

impl Chunk {
    pub fn slot(block: u64, group: u64, input_channel: u64) -> Self {
        Self {
            block,
            group,
            input_channel: Some(input_channel),
        }
    }

    pub fn group(block: u64, group: u64) -> Self {
        Self {
            block,
            group,
            input_channel: None,
        }
    }
}

impl fmt::Display for Chunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}.g{}", self.block, self.group)?;
        if let Some(c) = self.input_channel {
            write!(f, ".c{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Chunk {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed chunk `{s}`");
        let mut parts = s.split('.');
        let mut field = |prefix: char| -> Result<u64, String> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(prefix))
                .and_then(|p| p.parse().ok())
                .ok_or_else(bad)
        };
        let block = field('b')?;
        let group = field('g')?;
        let input_channel = match s.matches('.').count() {
            1 => None,
            2 => Some(field('c')?),
            _ => return Err(bad()),
        };
        Ok(Self {
            block,
            group,
            input_channel,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageEvent {
    pub stage: Stage,
    pub chunk: Chunk,
    pub start: u64,
    pub end: u64,
}

impl StageEvent {
    pub fn new(stage: Stage, chunk: Chunk, start: u64, end: u64) -> Self {
        Self {
            stage,
            chunk,
            start,
            end,
        }
    }
}

/// Structural checks: positive durations, start order, exclusive stages,
/// per-chunk stage order, and the total.
pub fn validate_trace(trace: &super::PipelineTrace) -> Result<(), String> {
    let events = &trace.events;
    if let Some(e) = events.iter().find(|e| e.end <= e.start) {
        return Err(format!("empty event {} {}", e.stage, e.chunk));
    }
    if events.windows(2).any(|w| w[1].start < w[0].start) {
        return Err("events not ordered by start".into());
    }
    let mut last_end: HashMap<Stage, u64> = HashMap::new();
    for e in events {
        let prev = last_end.entry(e.stage).or_insert(0);
        if e.start < *prev {
            return Err(format!("{} overlaps on stage {}", e.chunk, e.stage));
        }
        *prev = e.end;
    }
    let mut done: HashMap<(Chunk, Stage), u64> = HashMap::new();
    for e in events {
        done.insert((e.chunk, e.stage), e.end);
    }
    for e in events {
        let ready = match (e.stage, trace.mode, e.chunk.input_channel) {
            (Stage::Transfer, _, _) => None,
            (Stage::Multiply, _, _) => done.get(&(e.chunk, Stage::Transfer)).copied(),
            (Stage::Accumulate, _, _) => done.get(&(e.chunk, Stage::Multiply)).copied(),
            (Stage::Relu, ConvKind::Depthwise, _) => {
                done.get(&(e.chunk, Stage::Accumulate)).copied()
            }
            (Stage::Relu, _, _) => done
                .iter()
                .filter(|((c, s), _)| {
                    *s == Stage::Accumulate && c.block == e.chunk.block && c.group == e.chunk.group
                })
                .map(|(_, &end)| end)
                .max(),
        };
        if e.stage != Stage::Transfer {
            match ready {
                Some(end) if end <= e.start => {}
                Some(_) => return Err(format!("{} {} starts before its input", e.stage, e.chunk)),
                None => return Err(format!("{} {} has no producing event", e.stage, e.chunk)),
            }
        }
    }
    let max_end = events.iter().map(|e| e.end).max().unwrap_or(0);
    if max_end != trace.total_cycles {
        return Err(format!(
            "total {} differs from last event end {max_end}",
            trace.total_cycles
        ));
    }
    Ok(())
}

//! Multi-segment networks.
//!
//! Detection heads are not sequential: a backbone feeds a feature pyramid,
//! and context modules fork into parallel branches. A [`CompositeNetwork`]
//! describes such a model as a list of sequential segments, each with its own
//! input tensor, without modelling the dataflow between them. Two annotations
//! keep the accounting honest:
//!
//! * `shared_prefix`: the first `layers` layers of this segment are the same
//!   computation as those of an earlier segment (a branch fork), so they are
//!   neither computed nor stored twice.
//! * `weight_group`: segments with the same group label share one weight set
//!   (identical layers applied to different inputs).

use super::{NetworkSpec, TensorShape};
use crate::error::{Error, Result};
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedPrefix {
    pub segment: String,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub tag: Option<String>,
    pub weight_group: Option<String>,
    pub shared_prefix: Option<SharedPrefix>,
    pub network: NetworkSpec,
}

impl Segment {
    pub fn new(name: impl Into<String>, network: NetworkSpec) -> Self {
        let name = name.into();
        Self {
            network: network.renamed(name.clone()),
            name,
            tag: None,
            weight_group: None,
            shared_prefix: None,
        }
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn in_weight_group(mut self, group: impl Into<String>) -> Self {
        self.weight_group = Some(group.into());
        self
    }

    pub fn sharing_prefix(mut self, segment: impl Into<String>, layers: usize) -> Self {
        self.shared_prefix = Some(SharedPrefix {
            segment: segment.into(),
            layers,
        });
        self
    }

    fn prefix_len(&self) -> usize {
        self.shared_prefix.as_ref().map_or(0, |p| p.layers)
    }
}

/// How one layer of one segment enters the cost totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerAccount {
    pub segment: usize,
    pub layer: usize,
    /// False for layers inside a shared prefix.
    pub computed: bool,
    /// False for shared-prefix layers and repeated members of a weight group.
    pub weights_counted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeNetwork {
    name: String,
    input_shape: TensorShape,
    segments: Vec<Segment>,
}

impl CompositeNetwork {
    /// `input_shape` is the model input (the image); it normalizes per-pixel
    /// costs and bounds the frame size, while each segment carries its own
    /// input tensor.
    pub fn new(
        name: impl Into<String>,
        input_shape: TensorShape,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        input_shape.validate()?;
        let net = Self {
            name: name.into(),
            input_shape,
            segments,
        };
        net.validate()?;
        Ok(net)
    }

    /// Wraps a sequential network as a single untagged segment.
    pub fn from_single(net: &NetworkSpec) -> Self {
        Self {
            name: net.name().to_string(),
            input_shape: net.input_shape(),
            segments: vec![Segment::new(net.name(), net.clone())],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> TensorShape {
        self.input_shape
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, seg) in self.segments.iter().enumerate() {
            if seen.insert(seg.name.as_str(), i).is_some() {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate segment name `{}`",
                    seg.name
                )));
            }
            if let Some(prefix) = &seg.shared_prefix {
                let owner = seen
                    .get(prefix.segment.as_str())
                    .filter(|&&j| j < i)
                    .map(|&j| &self.segments[j])
                    .ok_or_else(|| {
                        Error::InvalidNetwork(format!(
                            "segment `{}` shares a prefix with `{}`, which is not an earlier segment",
                            seg.name, prefix.segment
                        ))
                    })?;
                if !prefix_matches(owner, seg, prefix.layers) {
                    return Err(Error::InvalidNetwork(format!(
                        "segment `{}`: first {} layers differ from segment `{}`",
                        seg.name, prefix.layers, prefix.segment
                    )));
                }
            }
        }
        let mut groups: HashMap<&str, &Segment> = HashMap::new();
        for seg in &self.segments {
            if let Some(group) = &seg.weight_group {
                match groups.get(group.as_str()) {
                    None => {
                        groups.insert(group, seg);
                    }
                    Some(first) => {
                        if first.network.layers() != seg.network.layers() {
                            return Err(Error::InvalidNetwork(format!(
                                "segment `{}` is in weight group `{group}` but its layers differ from `{}`",
                                seg.name, first.name
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-layer accounting flags, in segment then layer order.
    pub fn accounts(&self) -> Vec<LayerAccount> {
        let mut counted: HashSet<(&str, usize)> = HashSet::new();
        let mut out = Vec::new();
        for (s, seg) in self.segments.iter().enumerate() {
            let prefix = seg.prefix_len();
            for l in 0..seg.network.layers().len() {
                let computed = l >= prefix;
                let weights_counted = computed
                    && match &seg.weight_group {
                        None => true,
                        Some(group) => counted.insert((group.as_str(), l)),
                    };
                out.push(LayerAccount {
                    segment: s,
                    layer: l,
                    computed,
                    weights_counted,
                });
            }
        }
        out
    }

    /// Replaces segment networks, dropping prefix sharing that no longer
    /// holds (for example after a rewrite changed the shared layers).
    pub fn with_networks(&self, networks: Vec<NetworkSpec>) -> Result<Self> {
        assert_eq!(networks.len(), self.segments.len());
        let mut segments: Vec<Segment> = self
            .segments
            .iter()
            .zip(networks)
            .map(|(seg, network)| Segment {
                network,
                ..seg.clone()
            })
            .collect();
        for i in 0..segments.len() {
            if let Some(prefix) = segments[i].shared_prefix.clone() {
                let owner = segments[..i].iter().find(|s| s.name == prefix.segment);
                let keep = owner.is_some_and(|o| prefix_matches(o, &segments[i], prefix.layers));
                if !keep {
                    segments[i].shared_prefix = None;
                }
            }
        }
        Self::new(self.name.clone(), self.input_shape, segments)
    }
}

fn prefix_matches(owner: &Segment, seg: &Segment, layers: usize) -> bool {
    let (a, b) = (owner.network.layers(), seg.network.layers());
    layers <= a.len()
        && layers <= b.len()
        && owner.network.input_shape() == seg.network.input_shape()
        && a[..layers] == b[..layers]
}

/// A parsed model file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Model {
    Single(NetworkSpec),
    Composite(CompositeNetwork),
}

impl Model {
    pub fn name(&self) -> &str {
        match self {
            Model::Single(net) => net.name(),
            Model::Composite(net) => net.name(),
        }
    }

    pub fn to_composite(&self) -> CompositeNetwork {
        match self {
            Model::Single(net) => CompositeNetwork::from_single(net),
            Model::Composite(net) => net.clone(),
        }
    }
}

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{for_each_transition, uniform};
use crate::epi::MacroClass;
use crate::graph::{Move, SpatialGraph, WalkContext, WalkPolicy};
use crate::sim::{EpiLog, NodeLog};
use crate::{Error, Result};

/// Bin boundaries for a neighbor's infectious fraction. Bins are half-open
/// except the last, which is closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NeighborBins {
    boundaries: Vec<f64>,
}

impl NeighborBins {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        let ok = boundaries.len() >= 2
            && boundaries.iter().all(|b| b.is_finite())
            && boundaries.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::InvalidParams(format!(
                "bad bin boundaries {boundaries:?}"
            )));
        }
        Ok(NeighborBins { boundaries })
    }

    pub fn n_bins(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn bin(&self, x: f64) -> u8 {
        let inner = &self.boundaries[1..self.boundaries.len() - 1];
        inner.iter().filter(|&&b| x >= b).count() as u8
    }
}

impl Default for NeighborBins {
    fn default() -> Self {
        NeighborBins {
            boundaries: vec![0.0, 0.1, 0.5, 1.0],
        }
    }
}

impl TryFrom<Vec<f64>> for NeighborBins {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        NeighborBins::new(v)
    }
}

impl From<NeighborBins> for Vec<f64> {
    fn from(b: NeighborBins) -> Self {
        b.boundaries
    }
}

type FullKey = (usize, MacroClass, Vec<u8>);

/// Markov walk table with two levels of backoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "McRecord", into = "McRecord")]
pub struct McWalkModel {
    bins: NeighborBins,
    alpha_s: f64,
    degrees: Vec<usize>,
    full: BTreeMap<FullKey, Vec<f64>>,
    by_class: BTreeMap<(usize, MacroClass), Vec<f64>>,
    by_node: BTreeMap<usize, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct McRecord {
    bins: NeighborBins,
    alpha_s: f64,
    degrees: Vec<usize>,
    full: Vec<(usize, MacroClass, Vec<u8>, Vec<f64>)>,
    by_class: Vec<(usize, MacroClass, Vec<f64>)>,
    by_node: Vec<(usize, Vec<f64>)>,
}

impl From<McWalkModel> for McRecord {
    fn from(m: McWalkModel) -> Self {
        McRecord {
            bins: m.bins,
            alpha_s: m.alpha_s,
            degrees: m.degrees,
            full: m
                .full
                .into_iter()
                .map(|((v, c, s), p)| (v, c, s, p))
                .collect(),
            by_class: m
                .by_class
                .into_iter()
                .map(|((v, c), p)| (v, c, p))
                .collect(),
            by_node: m.by_node.into_iter().collect(),
        }
    }
}

impl TryFrom<McRecord> for McWalkModel {
    type Error = Error;

    fn try_from(r: McRecord) -> Result<Self> {
        let check = |v: usize, p: &[f64]| -> Result<()> {
            let d = *r
                .degrees
                .get(v)
                .ok_or_else(|| Error::Parse(format!("node {v} out of range")))?;
            let sum: f64 = p.iter().sum();
            if p.len() != d + 1 || p.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Parse(format!("bad distribution for node {v}")));
            }
            Ok(())
        };
        for (v, _, _, p) in &r.full {
            check(*v, p)?;
        }
        for (v, _, p) in &r.by_class {
            check(*v, p)?;
        }
        for (v, p) in &r.by_node {
            check(*v, p)?;
        }
        Ok(McWalkModel {
            full: r
                .full
                .into_iter()
                .map(|(v, c, s, p)| ((v, c, s), p))
                .collect(),
            by_class: r
                .by_class
                .into_iter()
                .map(|(v, c, p)| ((v, c), p))
                .collect(),
            by_node: r.by_node.into_iter().collect(),
            bins: r.bins,
            alpha_s: r.alpha_s,
            degrees: r.degrees,
        })
    }
}

impl McWalkModel {
    /// A table with no data: uniform over stay and neighbors everywhere.
    pub fn uniform(graph: &SpatialGraph) -> Self {
        McWalkModel {
            bins: NeighborBins::default(),
            alpha_s: 1.0,
            degrees: (0..graph.n_nodes())
                .map(|v| graph.neighbors(v).len())
                .collect(),
            full: BTreeMap::new(),
            by_class: BTreeMap::new(),
            by_node: BTreeMap::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.degrees.len()
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    fn signature(&self, ctx: &WalkContext) -> Vec<u8> {
        let inf = MacroClass::Infectious.index();
        ctx.neighbor_occupancy
            .iter()
            .map(|f| self.bins.bin(f[inf]))
            .collect()
    }

    /// The most specific stored distribution for `ctx`, if any.
    pub fn lookup(&self, ctx: &WalkContext) -> Option<&Vec<f64>> {
        self.full
            .get(&(ctx.node, ctx.class, self.signature(ctx)))
            .or_else(|| self.by_class.get(&(ctx.node, ctx.class)))
            .or_else(|| self.by_node.get(&ctx.node))
    }
}

impl WalkPolicy for McWalkModel {
    fn distribution(&self, graph: &SpatialGraph, ctx: &WalkContext) -> Vec<f64> {
        let options = graph.neighbors(ctx.node).len() + 1;
        match self.lookup(ctx) {
            Some(p) if p.len() == options => p.clone(),
            _ => uniform(options),
        }
    }
}

fn smooth(counts: &[u64], alpha_s: f64) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    let denom = total as f64 + alpha_s * counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 + alpha_s) / denom)
        .collect()
}

/// Fits the transition table by counting observed moves per context key.
pub fn fit_mc(
    nodes: &NodeLog,
    epi: &EpiLog,
    graph: &SpatialGraph,
    bins: &NeighborBins,
    alpha_s: f64,
) -> Result<McWalkModel> {
    if !(alpha_s >= 0.0 && alpha_s.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "smoothing must be non-negative, got {alpha_s}"
        )));
    }
    let mut model = McWalkModel {
        bins: bins.clone(),
        alpha_s,
        ..McWalkModel::uniform(graph)
    };
    let mut full: BTreeMap<FullKey, Vec<u64>> = BTreeMap::new();
    let mut by_class: BTreeMap<(usize, MacroClass), Vec<u64>> = BTreeMap::new();
    let mut by_node: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for_each_transition(nodes, epi, graph, |ctx, option| {
        let options = graph.neighbors(ctx.node).len() + 1;
        let sig = model.signature(ctx);
        full.entry((ctx.node, ctx.class, sig))
            .or_insert_with(|| vec![0; options])[option] += 1;
        by_class
            .entry((ctx.node, ctx.class))
            .or_insert_with(|| vec![0; options])[option] += 1;
        by_node.entry(ctx.node).or_insert_with(|| vec![0; options])[option] += 1;
    })?;
    model.full = full
        .into_iter()
        .map(|(k, c)| (k, smooth(&c, alpha_s)))
        .collect();
    model.by_class = by_class
        .into_iter()
        .map(|(k, c)| (k, smooth(&c, alpha_s)))
        .collect();
    model.by_node = by_node
        .into_iter()
        .map(|(k, c)| (k, smooth(&c, alpha_s)))
        .collect();
    Ok(model)
}

pub fn mc_sample_next<R: Rng + ?Sized>(
    model: &McWalkModel,
    graph: &SpatialGraph,
    ctx: &WalkContext,
    rng: &mut R,
) -> Move {
    model.next_move(graph, ctx, rng)
}

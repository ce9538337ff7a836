//! Walk models fitted from continuous-space position logs projected onto a
//! graph: a smoothed Markov transition table and a per-node softmax classifier.

mod mac;
mod mc;

pub use mac::{
    collect_mac_samples, featurize, fit_mac, mac_loss_and_grad, mac_predict, n_features, softmax,
    train_mac_node, MacNodeModel, MacSample, MacTrainParams, MacWalkModel, NodeFitReport,
};
pub use mc::{fit_mc, mc_sample_next, McWalkModel, NeighborBins};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Move, Occupancy, SpatialGraph, WalkContext, WalkPolicy};
use crate::sim::{EpiLog, NodeLog, PositionLog};
use crate::{Error, Result};

/// Replaces every logged position by its nearest graph node.
pub fn project_log_to_graph(log: &PositionLog, graph: &SpatialGraph) -> NodeLog {
    NodeLog {
        frames: log
            .frames
            .iter()
            .map(|f| f.iter().map(|&p| graph.nearest_node(p)).collect())
            .collect(),
    }
}

/// Observed transitions that could be used for fitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransitionStats {
    pub used: usize,
    /// Jumps between nodes that are not adjacent in the graph.
    pub skipped: usize,
}

/// Calls `f(context, option)` for every agent transition t -> t+1, where
/// `option` indexes `[stay, neighbors...]`. The context is built from frame t.
pub fn for_each_transition<F>(
    nodes: &NodeLog,
    epi: &EpiLog,
    graph: &SpatialGraph,
    mut f: F,
) -> Result<TransitionStats>
where
    F: FnMut(&WalkContext, usize),
{
    let frames = &nodes.frames;
    if frames.len() < 2 {
        return Err(Error::contract("a node log needs at least two frames"));
    }
    if epi.classes.len() < frames.len() || epi.clock_ratio.len() < frames.len() {
        return Err(Error::contract("epidemic log is shorter than the node log"));
    }
    let n_agents = frames[0].len();
    if n_agents == 0 {
        return Err(Error::contract("empty node sequences"));
    }
    let horizon = (frames.len() - 1) as f64;
    let mut stats = TransitionStats::default();
    for t in 0..frames.len() - 1 {
        let (now, next) = (&frames[t], &frames[t + 1]);
        let classes = &epi.classes[t];
        if now.len() != n_agents || next.len() != n_agents || classes.len() != n_agents {
            return Err(Error::contract(format!(
                "frame {t} has inconsistent agent count"
            )));
        }
        if let Some(&v) = now.iter().chain(next).find(|&&v| v >= graph.n_nodes()) {
            return Err(Error::contract(format!("node {v} is not in the graph")));
        }
        let occupancy = Occupancy::tally(
            graph.n_nodes(),
            now.iter().copied().zip(classes.iter().copied()),
        );
        for i in 0..n_agents {
            let (u, v) = (now[i], next[i]);
            let option = if u == v {
                0
            } else {
                match graph.neighbors(u).binary_search(&v) {
                    Ok(k) => k + 1,
                    Err(_) => {
                        stats.skipped += 1;
                        continue;
                    }
                }
            };
            let ctx = WalkContext::build(
                graph,
                &occupancy,
                u,
                classes[i],
                epi.clock_ratio[t][i],
                t as f64 / horizon,
            );
            f(&ctx, option);
            stats.used += 1;
        }
    }
    Ok(stats)
}

fn uniform(options: usize) -> Vec<f64> {
    vec![1.0 / options as f64; options]
}

/// Either fitted walk model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WalkModel {
    Mc(McWalkModel),
    Mac(MacWalkModel),
}

impl WalkModel {
    pub fn n_nodes(&self) -> usize {
        match self {
            WalkModel::Mc(m) => m.n_nodes(),
            WalkModel::Mac(m) => m.n_nodes(),
        }
    }

    /// Checks that the model was fitted for a graph with the same degrees.
    pub fn check_graph(&self, graph: &SpatialGraph) -> Result<()> {
        let degrees = match self {
            WalkModel::Mc(m) => m.degrees().to_vec(),
            WalkModel::Mac(m) => m.degrees(),
        };
        let same = degrees.len() == graph.n_nodes()
            && degrees
                .iter()
                .enumerate()
                .all(|(v, &d)| graph.neighbors(v).len() == d);
        if same {
            Ok(())
        } else {
            Err(Error::contract("walk model does not match the graph"))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn sample_next<R: Rng + ?Sized>(
        &self,
        graph: &SpatialGraph,
        ctx: &WalkContext,
        rng: &mut R,
    ) -> Move {
        self.next_move(graph, ctx, rng)
    }
}

impl WalkPolicy for WalkModel {
    fn distribution(&self, graph: &SpatialGraph, ctx: &WalkContext) -> Vec<f64> {
        match self {
            WalkModel::Mc(m) => m.distribution(graph, ctx),
            WalkModel::Mac(m) => m.distribution(graph, ctx),
        }
    }
}

//! Graph search: fitting a spatial graph to a continuous-space position log.

mod dtw;
mod ga;
mod quadtree;
mod tsxm;

pub use dtw::{dtw_by, dtw_by_within, dtw_distance, dtw_distance_within, dtw_path, dtw_scalar};
pub use ga::{
    crossover, crossover_at, fitness, ga_search, greedy_set_cover_init, mutate,
    royalty_tournament_select, selection_weights, GaMember, GaOutcome, GaParams,
};
pub use quadtree::{
    average_quadtrees, build_quadtree, build_quadtree_in, leaf_satisfies_stop, quadtree_search,
    quadtree_to_graph, Cell, QuadtreeNode, QuadtreeParams,
};
pub use tsxm::{assign, dtw_kmeans, elbow_select, tsxm_search, KMeansFit, TsxmOutcome, TsxmParams};

use std::collections::BTreeMap;

use crate::geom::Point;
use crate::graph::SpatialGraph;
use crate::sim::PositionLog;
use crate::{Error, Result};

/// Keeps at most `max` evenly spaced frames, always including the first and
/// the last.
pub fn subsample_frames(log: &PositionLog, max: usize) -> PositionLog {
    let n = log.frames.len();
    if n <= max || max == 0 {
        return log.clone();
    }
    if max == 1 {
        return PositionLog {
            frames: vec![log.frames[0].clone()],
        };
    }
    let frames = (0..max)
        .map(|i| log.frames[((i * (n - 1)) as f64 / (max - 1) as f64).round() as usize].clone())
        .collect();
    PositionLog { frames }
}

/// Joins nodes u != v when agents were seen moving from u to v (nearest-node
/// projection) at least `min_count` times, in either direction.
pub fn infer_edges(
    nodes: &[Point],
    log: &PositionLog,
    min_count: usize,
) -> Result<Vec<(usize, usize)>> {
    if nodes.is_empty() {
        return Err(Error::contract("no nodes"));
    }
    let index = SpatialGraph::new(nodes.to_vec(), [])?;
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut prev: Option<Vec<usize>> = None;
    for frame in &log.frames {
        let cur: Vec<usize> = frame.iter().map(|&p| index.nearest_node(p)).collect();
        if let Some(prev) = &prev {
            for (&u, &v) in prev.iter().zip(&cur) {
                if u != v {
                    *counts.entry((u.min(v), u.max(v))).or_insert(0) += 1;
                }
            }
        }
        prev = Some(cur);
    }
    Ok(counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1))
        .map(|(e, _)| e)
        .collect())
}

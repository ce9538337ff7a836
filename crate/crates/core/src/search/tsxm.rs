use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dtw::{dtw_distance, dtw_distance_within, dtw_path};
use super::{infer_edges, subsample_frames};
use crate::geom::{BBox, Point};
use crate::graph::SpatialGraph;
use crate::rng::substream;
use crate::sim::PositionLog;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsxmParams {
    /// Largest cluster count tried.
    pub epsilon: usize,
    pub restarts: usize,
    /// Cap on centroid refinement rounds per k-means run.
    pub dba_iters: usize,
    /// Relative inertia improvement below which k-means stops.
    pub tol: f64,
    /// Series are subsampled to at most this many evenly spaced frames.
    pub max_series_len: usize,
    /// Clustering is fitted on at most this many agents; all are assigned.
    pub max_fit_series: usize,
    pub min_count: usize,
}

impl Default for TsxmParams {
    fn default() -> Self {
        TsxmParams {
            epsilon: 8,
            restarts: 3,
            dba_iters: 15,
            tol: 1e-4,
            max_series_len: 32,
            max_fit_series: 300,
            min_count: 1,
        }
    }
}

impl TsxmParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 1
            || self.restarts < 1
            || !(self.tol >= 0.0)
            || self.max_series_len < 1
            || self.max_fit_series < 1
        {
            return Err(Error::InvalidParams(format!(
                "bad TSxM parameters {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<Point>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub history: Vec<f64>,
}

fn resample(s: &[Point], len: usize) -> Vec<Point> {
    if len == 1 || s.len() == 1 {
        return vec![s[0]; len];
    }
    (0..len)
        .map(|i| s[((i * (s.len() - 1)) as f64 / (len - 1) as f64).round() as usize])
        .collect()
}

fn median_len(series: &[Vec<Point>]) -> usize {
    let mut lens: Vec<usize> = series.iter().map(Vec::len).collect();
    lens.sort_unstable();
    lens[(lens.len() - 1) / 2]
}

/// Lower median; any value between the two middle ones minimizes L1.
fn median(v: &mut [f64]) -> f64 {
    let mid = (v.len() - 1) / 2;
    *v.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Nearest centroid per series (ties: lowest index) and the summed distance.
pub fn assign(series: &[Vec<Point>], centroids: &[Vec<Point>]) -> Result<(Vec<usize>, f64)> {
    let mut total = 0.0;
    let mut out = Vec::with_capacity(series.len());
    for s in series {
        let mut best = (0, f64::INFINITY);
        for (c, cen) in centroids.iter().enumerate() {
            let d = dtw_distance_within(s, cen, best.1)?;
            if d < best.1 {
                best = (c, d);
            }
        }
        out.push(best.0);
        total += best.1;
    }
    Ok((out, total))
}

/// One barycenter refinement: every centroid element moves to the
/// coordinate-wise median of the series elements aligned to it.
fn dba_update(
    series: &[Vec<Point>],
    assignments: &[usize],
    centroids: &mut [Vec<Point>],
) -> Result<()> {
    for (c, cen) in centroids.iter_mut().enumerate() {
        let mut xs: Vec<Vec<f64>> = vec![Vec::new(); cen.len()];
        let mut ys: Vec<Vec<f64>> = vec![Vec::new(); cen.len()];
        for (s, _) in series.iter().zip(assignments).filter(|(_, &a)| a == c) {
            for (i, j) in dtw_path(s, cen)?.1 {
                xs[j].push(s[i].x);
                ys[j].push(s[i].y);
            }
        }
        if xs[0].is_empty() {
            continue;
        }
        for (j, p) in cen.iter_mut().enumerate() {
            *p = Point::new(median(&mut xs[j]), median(&mut ys[j]));
        }
    }
    Ok(())
}

/// k-means under DTW with k-means++ seeding and median barycenters.
pub fn dtw_kmeans<R: Rng + ?Sized>(
    series: &[Vec<Point>],
    k: usize,
    tp: &TsxmParams,
    rng: &mut R,
) -> Result<KMeansFit> {
    if k == 0 || k > series.len() {
        return Err(Error::contract(format!(
            "cannot form {k} clusters from {} series",
            series.len()
        )));
    }
    if series.iter().any(Vec::is_empty) {
        return Err(Error::contract("empty series"));
    }
    let len = median_len(series);
    let mut chosen = vec![rng.random_range(0..series.len())];
    let mut nearest: Vec<f64> = series
        .iter()
        .map(|s| dtw_distance(s, &series[chosen[0]]))
        .collect::<Result<_>>()?;
    while chosen.len() < k {
        let weights: Vec<f64> = nearest.iter().map(|d| d * d).collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(rng),
            // every series coincides with a chosen one
            Err(_) => (0..series.len()).find(|i| !chosen.contains(i)).unwrap_or(0),
        };
        chosen.push(next);
        for (i, s) in series.iter().enumerate() {
            nearest[i] = nearest[i].min(dtw_distance_within(s, &series[next], nearest[i])?);
        }
    }
    let mut centroids: Vec<Vec<Point>> =
        chosen.iter().map(|&i| resample(&series[i], len)).collect();
    let (mut assignments, mut inertia) = assign(series, &centroids)?;
    let mut history = vec![inertia];
    for _ in 0..tp.dba_iters {
        if inertia == 0.0 {
            break;
        }
        let mut next = centroids.clone();
        dba_update(series, &assignments, &mut next)?;
        let (a, i) = assign(series, &next)?;
        history.push(i);
        let improved = inertia - i;
        centroids = next;
        assignments = a;
        inertia = i;
        if improved <= tp.tol * history[history.len() - 2] {
            break;
        }
    }
    Ok(KMeansFit {
        centroids,
        assignments,
        inertia,
        history,
    })
}

/// Cluster count at the largest distance from the chord joining the first
/// and last points of the min-max normalized inertia curve. Collinear
/// profiles and ties resolve to the smallest k.
pub fn elbow_select(inertias: &[f64]) -> usize {
    let n = inertias.len();
    if n <= 2 {
        return 1;
    }
    let lo = inertias.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = inertias.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pts: Vec<(f64, f64)> = inertias
        .iter()
        .enumerate()
        .map(|(i, v)| (i as f64 / (n - 1) as f64, (v - lo) / span))
        .collect();
    let (x0, y0) = pts[0];
    let (x1, y1) = pts[n - 1];
    let norm = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let mut best = (0, 1e-9);
    for (i, &(x, y)) in pts.iter().enumerate() {
        let d = ((y1 - y0) * x - (x1 - x0) * y + x1 * y0 - y1 * x0).abs() / norm;
        if d > best.1 + 1e-12 {
            best = (i, d);
        }
    }
    best.0 + 1
}

/// Sum over agents and steps of the L1 distance to the cluster's center of
/// mass at that step.
fn com_spread(series: &[Vec<Point>], assignments: &[usize], k: usize) -> f64 {
    let len = series[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<Point>> = series
            .iter()
            .zip(assignments)
            .filter(|(_, &a)| a == c)
            .map(|(s, _)| s)
            .collect();
        if members.is_empty() {
            continue;
        }
        for t in 0..len {
            let com = members.iter().fold(Point::default(), |acc, s| acc + s[t])
                * (1.0 / members.len() as f64);
            total += members.iter().map(|s| s[t].l1(com)).sum::<f64>();
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsxmOutcome {
    pub graph: SpatialGraph,
    pub k: usize,
    /// Inertia of the kept run for k = 1, 2, ...
    pub inertias: Vec<f64>,
    /// Cluster of every agent, indexing graph nodes.
    pub assignments: Vec<usize>,
}

pub fn tsxm_search<R: Rng + ?Sized>(
    log: &PositionLog,
    bbox: &BBox,
    tp: &TsxmParams,
    rng: &mut R,
) -> Result<TsxmOutcome> {
    tp.validate()?;
    let n_agents = log.n_agents();
    if log.frames.is_empty() || n_agents == 0 {
        return Err(Error::contract("empty position log"));
    }
    let w = if bbox.width() > 0.0 {
        bbox.width()
    } else {
        1.0
    };
    let h = if bbox.height() > 0.0 {
        bbox.height()
    } else {
        1.0
    };
    let short = subsample_frames(log, tp.max_series_len);
    let series: Vec<Vec<Point>> = (0..n_agents)
        .map(|i| {
            short
                .frames
                .iter()
                .map(|f| Point::new((f[i].x - bbox.min.x) / w, (f[i].y - bbox.min.y) / h))
                .collect()
        })
        .collect();
    let fit_idx: Vec<usize> = if n_agents > tp.max_fit_series {
        let mut v = rand::seq::index::sample(rng, n_agents, tp.max_fit_series).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n_agents).collect()
    };
    let fit: Vec<Vec<Point>> = fit_idx.iter().map(|&i| series[i].clone()).collect();
    let base: u64 = rng.random();

    let mut inertias = Vec::new();
    let mut fits = Vec::new();
    for k in 1..=tp.epsilon.min(fit.len()) {
        let mut best: Option<(f64, KMeansFit)> = None;
        for a in 0..tp.restarts {
            let run = dtw_kmeans(&fit, k, tp, &mut substream(base, &[k as u64, a as u64]))?;
            let spread = com_spread(&fit, &run.assignments, k);
            if best.as_ref().is_none_or(|(s, _)| spread < *s) {
                best = Some((spread, run));
            }
        }
        let (_, run) = best.expect("restarts >= 1");
        inertias.push(run.inertia);
        fits.push(run);
    }
    let k = elbow_select(&inertias);
    let chosen = &fits[k - 1];
    let (all_assign, _) = assign(&series, &chosen.centroids)?;

    let mut sums = vec![(Point::default(), 0usize); k];
    for (i, &c) in all_assign.iter().enumerate() {
        for f in &log.frames {
            sums[c].0 = sums[c].0 + f[i];
            sums[c].1 += 1;
        }
    }
    let mut relabel = vec![usize::MAX; k];
    let mut nodes = Vec::new();
    for (c, (s, n)) in sums.iter().enumerate() {
        if *n > 0 {
            relabel[c] = nodes.len();
            nodes.push(*s * (1.0 / *n as f64));
        }
    }
    let edges = infer_edges(&nodes, log, tp.min_count)?;
    Ok(TsxmOutcome {
        graph: SpatialGraph::new(nodes, edges)?,
        k,
        inertias,
        assignments: all_assign.iter().map(|&c| relabel[c]).collect(),
    })
}

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{infer_edges, subsample_frames};
use crate::geom::{BBox, Point};
use crate::graph::SpatialGraph;
use crate::norm::pairs_within;
use crate::sim::PositionLog;
use crate::{Error, Result};

pub type GaMember = Vec<Point>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaParams {
    pub pop_size: usize,
    pub generations: usize,
    /// Elite fraction.
    pub alpha: f64,
    /// Mutation step standard deviation, meters.
    pub sigma: f64,
    /// Random members draw their node count from `1..=2 * x0`.
    pub x0: usize,
    pub r_cover: f64,
    /// Per-node loss penalty.
    pub lambda_v: f64,
    pub p_crossover: f64,
    pub p_mutation: f64,
    /// Frames kept (evenly spaced) when evaluating fitness.
    pub max_frames: usize,
    /// Transitions needed before two nodes are joined.
    pub min_count: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            pop_size: 40,
            generations: 100,
            alpha: 0.1,
            sigma: 2.0,
            x0: 10,
            r_cover: 10.0,
            lambda_v: 0.0,
            p_crossover: 0.7,
            p_mutation: 0.3,
            max_frames: 40,
            min_count: 1,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.pop_size < 2
            || self.generations < 1
            || !prob(self.alpha)
            || !(self.sigma >= 0.0)
            || self.x0 < 1
            || !(self.r_cover >= 0.0)
            || !(self.lambda_v >= 0.0)
            || !prob(self.p_crossover)
            || !prob(self.p_mutation)
            || self.max_frames < 1
        {
            return Err(Error::InvalidParams(format!("bad GA parameters {self:?}")));
        }
        Ok(())
    }

    /// Elite slots, at least one.
    pub fn n_elite(&self) -> usize {
        elite_count(self.alpha, self.pop_size).max(1)
    }
}

fn elite_count(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64).ceil() as usize).min(n)
}

/// Mean distance from each agent to its nearest member node, averaged over
/// frames, plus `lambda_v` per node.
pub fn fitness(member: &[Point], log: &PositionLog, lambda_v: f64) -> Result<f64> {
    if member.is_empty() {
        return Err(Error::contract("member has no nodes"));
    }
    if log.frames.is_empty() {
        return Err(Error::contract("empty position log"));
    }
    let mut total = 0.0;
    for frame in &log.frames {
        if frame.is_empty() {
            continue;
        }
        let s: f64 = frame
            .iter()
            .map(|p| {
                member
                    .iter()
                    .map(|q| p.dist_sq(*q))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .sum();
        total += s / frame.len() as f64;
    }
    Ok(total / log.frames.len() as f64 + lambda_v * member.len() as f64)
}

/// Greedy cover of the positions by discs of radius `r_cover` centred on
/// agent positions. Ties go to the lowest agent index.
pub fn greedy_set_cover_init(positions: &[Point], r_cover: f64) -> Result<GaMember> {
    if positions.is_empty() {
        return Err(Error::contract("no positions to cover"));
    }
    let n = positions.len();
    let mut covers: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for (i, j) in pairs_within(positions, &vec![false; n], r_cover) {
        covers[i].push(j);
        covers[j].push(i);
    }
    let mut gain: Vec<usize> = covers.iter().map(Vec::len).collect();
    let mut covered = vec![false; n];
    let mut left = n;
    let mut picked = Vec::new();
    while left > 0 {
        let best = (0..n).fold(0, |b, i| if gain[i] > gain[b] { i } else { b });
        picked.push(positions[best]);
        for &j in &covers[best] {
            if !covered[j] {
                covered[j] = true;
                left -= 1;
                for &c in &covers[j] {
                    gain[c] -= 1;
                }
            }
        }
    }
    Ok(picked)
}

/// Adds a normal(0, sigma^2 I) step to one uniformly chosen node.
pub fn mutate<R: Rng + ?Sized>(member: &[Point], sigma: f64, rng: &mut R) -> GaMember {
    let mut out = member.to_vec();
    if out.is_empty() {
        return out;
    }
    let i = rng.random_range(0..out.len());
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    out[i] = out[i] + Point::new(dx, dy) * sigma;
    out
}

/// One-point crossover: children swap everything after index `j`.
pub fn crossover_at(m1: &[Point], m2: &[Point], j: usize) -> Result<(GaMember, GaMember)> {
    if m1.len() != m2.len() {
        return Err(Error::contract("crossover needs members of equal length"));
    }
    if j > m1.len() {
        return Err(Error::contract("crossover index out of range"));
    }
    let c1 = m1[..j].iter().chain(&m2[j..]).copied().collect();
    let c2 = m2[..j].iter().chain(&m1[j..]).copied().collect();
    Ok((c1, c2))
}

/// Crossover at a uniform index in `1..=len`.
pub fn crossover<R: Rng + ?Sized>(
    m1: &[Point],
    m2: &[Point],
    rng: &mut R,
) -> Result<(GaMember, GaMember)> {
    if m1.len() != m2.len() || m1.is_empty() {
        return Err(Error::contract(
            "crossover needs non-empty members of equal length",
        ));
    }
    let j = rng.random_range(1..=m1.len());
    crossover_at(m1, m2, j)
}

/// Ranks by loss (stable), copies the top `ceil(alpha * n)` and fills the
/// rest by sampling with replacement, weighted by inverse loss.
pub fn royalty_tournament_select<R: Rng + ?Sized>(
    pop: &[GaMember],
    losses: &[f64],
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<GaMember>> {
    if pop.len() != losses.len() || pop.len() < 2 {
        return Err(Error::contract(
            "selection needs at least two members with losses",
        ));
    }
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));
    let n_elite = elite_count(alpha, pop.len());
    let mut out: Vec<GaMember> = order[..n_elite].iter().map(|&i| pop[i].clone()).collect();
    if n_elite < pop.len() {
        let weights = selection_weights(losses);
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::contract(format!("selection weights: {e}")))?;
        while out.len() < pop.len() {
            out.push(pop[dist.sample(rng)].clone());
        }
    }
    Ok(out)
}

/// Normalized inverse-loss weights.
pub fn selection_weights(losses: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = losses.iter().map(|l| 1.0 / (l + 1e-9)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaOutcome {
    pub graph: SpatialGraph,
    pub best: GaMember,
    pub best_loss: f64,
    /// Best loss of each generation.
    pub history: Vec<f64>,
}

fn random_member<R: Rng + ?Sized>(bbox: &BBox, x0: usize, rng: &mut R) -> GaMember {
    let n = rng.random_range(1..=2 * x0);
    (0..n)
        .map(|_| {
            Point::new(
                bbox.min.x + rng.random::<f64>() * bbox.width(),
                bbox.min.y + rng.random::<f64>() * bbox.height(),
            )
        })
        .collect()
}

pub fn ga_search<R: Rng + ?Sized>(
    log: &PositionLog,
    bbox: &BBox,
    gp: &GaParams,
    rng: &mut R,
) -> Result<GaOutcome> {
    gp.validate()?;
    let first = log
        .frames
        .first()
        .filter(|f| !f.is_empty())
        .ok_or_else(|| Error::contract("empty position log"))?;
    let eval_log = subsample_frames(log, gp.max_frames);
    let alpha = gp.alpha.max(1.0 / gp.pop_size as f64);
    let n_elite = elite_count(alpha, gp.pop_size);

    let mut pop: Vec<GaMember> = Vec::with_capacity(gp.pop_size);
    pop.push(greedy_set_cover_init(first, gp.r_cover)?);
    while pop.len() < gp.pop_size {
        pop.push(random_member(bbox, gp.x0, rng));
    }

    let mut history = Vec::with_capacity(gp.generations);
    let mut best: Option<(f64, GaMember)> = None;
    for g in 0..gp.generations {
        let losses = pop
            .iter()
            .map(|m| fitness(m, &eval_log, gp.lambda_v))
            .collect::<Result<Vec<_>>>()?;
        let (bi, bl) =
            losses
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, l)| if l < acc.1 { (i, l) } else { acc },
                );
        history.push(bl);
        if best.as_ref().is_none_or(|(l, _)| bl < *l) {
            best = Some((bl, pop[bi].clone()));
        }
        if g + 1 == gp.generations {
            break;
        }
        let mut next = royalty_tournament_select(&pop, &losses, alpha, rng)?;
        // elites pass through untouched
        let mut k = n_elite;
        while k + 1 < next.len() {
            if next[k].len() == next[k + 1].len() && rng.random::<f64>() < gp.p_crossover {
                let (a, b) = crossover(&next[k], &next[k + 1], rng)?;
                next[k] = a;
                next[k + 1] = b;
            }
            k += 2;
        }
        for m in next.iter_mut().skip(n_elite) {
            if rng.random::<f64>() < gp.p_mutation {
                *m = mutate(m, gp.sigma, rng)
                    .into_iter()
                    .map(|p| bbox.clamp(p))
                    .collect();
            }
        }
        pop = next;
    }
    let (best_loss, best) = best.expect("at least one generation");
    let edges = infer_edges(&best, log, gp.min_count)?;
    let graph = SpatialGraph::new(best.clone(), edges)?;
    Ok(GaOutcome {
        graph,
        best,
        best_loss,
        history,
    })
}

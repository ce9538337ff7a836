use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::case::Case;
use super::config::{GraphSearchKind, MethodsSection, SimSection, WalkKind};
use crate::geom::BBox;
use crate::graph::{GraphAgent, SpatialGraph};
use crate::norm::pairs_within;
use crate::rng::{derive_seed, seeded};
use crate::search::{ga_search, quadtree_search, tsxm_search};
use crate::sim::{
    agreement, run_graph, run_norm, EpiLog, NodeLog, PositionLog, Positions, SimConfig, SimRecord,
};
use crate::walk::{fit_mac, fit_mc, project_log_to_graph, WalkModel};
use crate::{Error, Result};

/// Fits a graph to a position log.
pub fn fit_graph(
    gs: GraphSearchKind,
    log: &PositionLog,
    bbox: &BBox,
    methods: &MethodsSection,
    seed: u64,
) -> Result<SpatialGraph> {
    let mut rng = seeded(seed);
    match gs {
        GraphSearchKind::Quadtree => quadtree_search(log, bbox, &methods.quadtree),
        GraphSearchKind::Ga => Ok(ga_search(log, bbox, &methods.ga, &mut rng)?.graph),
        GraphSearchKind::Tsxm => Ok(tsxm_search(log, bbox, &methods.tsxm, &mut rng)?.graph),
    }
}

pub fn fit_walk(
    wa: WalkKind,
    nodes: &NodeLog,
    epi: &EpiLog,
    graph: &SpatialGraph,
    methods: &MethodsSection,
    seed: u64,
) -> Result<WalkModel> {
    match wa {
        WalkKind::Mc => Ok(WalkModel::Mc(fit_mc(
            nodes,
            epi,
            graph,
            &methods.mc.bins,
            methods.mc.alpha_s,
        )?)),
        WalkKind::Mac => Ok(WalkModel::Mac(fit_mac(
            nodes,
            epi,
            graph,
            &methods.mac,
            &mut seeded(seed),
        )?)),
    }
}

/// Mean number of other agents within `r_int` per agent and frame.
pub fn norm_contact_rate(log: &PositionLog, r_int: f64) -> f64 {
    let mut total = 0.0;
    let mut frames = 0usize;
    for f in &log.frames {
        if f.is_empty() {
            continue;
        }
        let pairs = pairs_within(f, &vec![false; f.len()], r_int).len();
        total += 2.0 * pairs as f64 / f.len() as f64;
        frames += 1;
    }
    if frames == 0 {
        0.0
    } else {
        total / frames as f64
    }
}

/// Agents whose exposure is measured: every `stride`-th id, at most
/// [`MAX_FOCAL_AGENTS`] of them.
fn focal_stride(n_agents: usize) -> usize {
    n_agents.div_ceil(MAX_FOCAL_AGENTS).max(1)
}

const MAX_FOCAL_AGENTS: usize = 200;

/// Expected number of agents a focal agent would infect over the whole log in
/// continuous space, if it stayed infectious throughout and `beta` applied
/// per step spent within `r_int`. Averaged over the focal agents.
pub fn norm_pair_exposure(log: &PositionLog, r_int: f64, beta: f64) -> f64 {
    let n = log.frames.iter().map(Vec::len).max().unwrap_or(0);
    if n == 0 {
        return 0.0;
    }
    let stride = focal_stride(n);
    let mut steps: HashMap<(usize, usize), u32> = HashMap::new();
    for f in &log.frames {
        for (i, j) in pairs_within(f, &vec![false; f.len()], r_int) {
            for (a, b) in [(i, j), (j, i)] {
                if a % stride == 0 {
                    *steps.entry((a, b)).or_default() += 1;
                }
            }
        }
    }
    let s: f64 = steps
        .values()
        .map(|&t| 1.0 - (1.0 - beta).powi(t as i32))
        .sum();
    s / n.div_ceil(stride) as f64
}

/// For each (focal agent, other agent) pair that ever shares a node, the
/// frames spent together grouped by the number of other residents `m`.
/// Stored flat: pair `k` owns `entries[offsets[k]..offsets[k + 1]]`.
struct CoLocation {
    offsets: Vec<usize>,
    entries: Vec<(u32, u32)>,
    n_focal: usize,
    max_m: usize,
}

impl CoLocation {
    fn new(nodes: &NodeLog, n_nodes: usize) -> Self {
        let n_agents = nodes.frames.iter().map(Vec::len).max().unwrap_or(0);
        let stride = focal_stride(n_agents);
        let members: Vec<Vec<Vec<usize>>> = nodes
            .frames
            .iter()
            .map(|f| {
                let mut m = vec![Vec::new(); n_nodes];
                for (a, &v) in f.iter().enumerate() {
                    m[v].push(a);
                }
                m
            })
            .collect();
        let mut offsets = vec![0];
        let mut entries = Vec::new();
        let mut max_m = 0;
        // per other agent: (resident count, frames) in first-seen order
        let mut row: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_agents];
        for a in (0..n_agents).step_by(stride) {
            for (f, m) in nodes.frames.iter().zip(&members) {
                let Some(&v) = f.get(a) else { continue };
                let others = (m[v].len() - 1) as u32;
                max_m = max_m.max(others as usize);
                for &b in m[v].iter().filter(|&&b| b != a) {
                    let r = &mut row[b];
                    match r.iter_mut().rev().find(|(k, _)| *k == others) {
                        Some((_, c)) => *c += 1,
                        None => r.push((others, 1)),
                    }
                }
            }
            for r in row.iter_mut().filter(|r| !r.is_empty()) {
                entries.append(r);
                offsets.push(entries.len());
            }
        }
        CoLocation {
            offsets,
            entries,
            n_focal: n_agents.div_ceil(stride),
            max_m,
        }
    }

    /// Graph-mode counterpart of [`norm_pair_exposure`] at step duration `dt`.
    fn exposure(&self, beta: f64, dt: f64) -> f64 {
        if self.n_focal == 0 {
            return 0.0;
        }
        // log escape probability of one shared frame, by resident count
        let log_escape: Vec<f64> = (0..=self.max_m)
            .map(|m| (1.0 - beta * (1.0 - (-dt / m.max(1) as f64).exp())).ln())
            .collect();
        let s: f64 = self
            .offsets
            .windows(2)
            .map(|w| {
                let l: f64 = self.entries[w[0]..w[1]]
                    .iter()
                    .map(|&(m, c)| c as f64 * log_escape[m as usize])
                    .sum();
                1.0 - l.exp()
            })
            .sum();
        s / self.n_focal as f64
    }
}

const MAX_CONTACT_DT: f64 = 1e6;
const MIN_CONTACT_DT: f64 = 1e-9;

/// Step duration for graph mode such that the expected number of agents an
/// infectious agent reaches over the log matches the continuous log, given
/// per-contact transmission probability `beta`. Repeated contacts between the
/// same pair saturate in both spaces, so persistent local neighborhoods are
/// not mistaken for fresh contacts.
pub fn calibrate_contact_dt(
    log: &PositionLog,
    nodes: &NodeLog,
    n_nodes: usize,
    r_int: f64,
    beta: f64,
) -> f64 {
    let target = norm_pair_exposure(log, r_int, beta);
    if target <= 0.0 || beta <= 0.0 {
        return MIN_CONTACT_DT;
    }
    let co = CoLocation::new(nodes, n_nodes);
    let f = |dt: f64| co.exposure(beta, dt);
    let mut hi = 1.0;
    while f(hi) < target {
        hi *= 2.0;
        if hi >= MAX_CONTACT_DT {
            return MAX_CONTACT_DT;
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi.max(MIN_CONTACT_DT)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSeconds {
    pub norm_sim: f64,
    pub graph_search: f64,
    pub walk_fit: f64,
    pub graph_sim: f64,
}

/// Everything produced by one replicate.
#[derive(Clone, Debug)]
pub struct ReplicateRun {
    pub norm: SimRecord,
    pub graph: SpatialGraph,
    pub walk: WalkModel,
    pub contact_dt: f64,
    pub graph_run: SimRecord,
    pub agreement: f64,
    pub seconds: StageSeconds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub agreements: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub n_nodes: f64,
    pub n_edges: f64,
    /// Wall-clock, summed over replicates. Not reproducible.
    pub seconds: StageSeconds,
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage))
}

/// Norm run, graph fit, walk fit, graph run and agreement for one replicate.
pub fn run_replicate(
    case: &Case,
    sim: &SimSection,
    methods: &MethodsSection,
    gs: GraphSearchKind,
    wa: WalkKind,
    seed: u64,
) -> Result<ReplicateRun> {
    let cfg = SimConfig {
        steps: sim.steps,
        dt: 1.0,
        model: case.params.model(),
        stop: Default::default(),
    };
    let clock = Instant::now();
    let norm = staged(
        "norm-sim",
        run_norm(
            case.population.clone(),
            &case.env,
            &case.params,
            &sim.walk,
            &cfg,
            derive_seed(seed, &[0]),
        ),
    )?;
    let t_norm = clock.elapsed().as_secs_f64();
    let Positions::Norm(log) = &norm.positions else {
        return Err(Error::contract("norm run produced a node log"));
    };

    let clock = Instant::now();
    let graph = staged(
        "graph-search",
        fit_graph(gs, log, &case.env.bbox(), methods, derive_seed(seed, &[1])),
    )?;
    let t_graph = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let nodes = project_log_to_graph(log, &graph);
    let walk = staged(
        "walk-fit",
        fit_walk(
            wa,
            &nodes,
            &norm.epi,
            &graph,
            methods,
            derive_seed(seed, &[2]),
        ),
    )?;
    let t_walk = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let contact_dt = sim.contact_dt.unwrap_or_else(|| {
        calibrate_contact_dt(
            log,
            &nodes,
            graph.n_nodes(),
            sim.walk.r_int,
            case.params.mean_beta(),
        )
    });
    let pop: Vec<GraphAgent> = case
        .population
        .iter()
        .zip(&nodes.frames[0])
        .map(|(a, &node)| GraphAgent { epi: a.epi, node })
        .collect();
    let gcfg = SimConfig {
        dt: contact_dt,
        ..cfg
    };
    let graph_run = staged(
        "graph-sim",
        run_graph(
            pop,
            &graph,
            &walk,
            &case.params,
            &gcfg,
            derive_seed(seed, &[3]),
        ),
    )?;
    let t_gsim = clock.elapsed().as_secs_f64();

    let agreement = agreement(&norm.trajectory, &graph_run.trajectory)?;
    Ok(ReplicateRun {
        norm,
        graph,
        walk,
        contact_dt,
        graph_run,
        agreement,
        seconds: StageSeconds {
            norm_sim: t_norm,
            graph_search: t_graph,
            walk_fit: t_walk,
            graph_sim: t_gsim,
        },
    })
}

/// Sample mean and standard deviation (n - 1 denominator, 0 for n = 1).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `replicates` paired-seed replicates and summarizes them.
pub fn run_pipeline(
    case: &Case,
    sim: &SimSection,
    methods: &MethodsSection,
    gs: GraphSearchKind,
    wa: WalkKind,
    replicates: usize,
    seed: u64,
) -> Result<PipelineResult> {
    if replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    let mut agreements = Vec::with_capacity(replicates);
    let (mut nv, mut ne) = (0.0, 0.0);
    let mut seconds = StageSeconds::default();
    for r in 0..replicates {
        let run = run_replicate(case, sim, methods, gs, wa, derive_seed(seed, &[r as u64]))?;
        agreements.push(run.agreement);
        nv += run.graph.n_nodes() as f64;
        ne += run.graph.n_edges() as f64;
        seconds.norm_sim += run.seconds.norm_sim;
        seconds.graph_search += run.seconds.graph_search;
        seconds.walk_fit += run.seconds.walk_fit;
        seconds.graph_sim += run.seconds.graph_sim;
    }
    let (mean, std) = mean_std(&agreements);
    let k = replicates as f64;
    Ok(PipelineResult {
        agreements,
        mean,
        std,
        n_nodes: nv / k,
        n_edges: ne / k,
        seconds,
    })
}

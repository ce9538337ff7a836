//! Experiment harness: case sampling, the end-to-end pipeline, benchmark
//! tables and sensitivity sweeps.

mod case;
mod config;
mod pipeline;

pub use case::{
    case_seed, initial_population, n_initial_infected, sample_case, sample_params, Case, Split,
};
pub use config::{
    EnvSpec, ExperimentSpec, GraphSearchKind, GridSection, McParams, MethodsSection, ParamRanges,
    SeedsSection, SimSection, WalkKind,
};
pub use pipeline::{
    calibrate_contact_dt, fit_graph, fit_walk, mean_std, norm_contact_rate, norm_pair_exposure,
    run_pipeline, run_replicate, PipelineResult, ReplicateRun, StageSeconds,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::io::ResultRow;
use crate::norm::{Circle, EnvGenParams};
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let (mean, std) = mean_std(xs);
        Summary {
            mean,
            std,
            n: xs.len(),
        }
    }
}

/// Outcome of one pipeline on one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub split: Split,
    pub index: usize,
    pub seed: u64,
    pub graph_search: GraphSearchKind,
    pub walk: WalkKind,
    /// Tuned hyperparameter value in effect.
    pub hyperparameter: f64,
    pub agreement: f64,
    pub n_nodes: f64,
    pub n_edges: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub graph_search: GraphSearchKind,
    pub walk: WalkKind,
    pub hyperparameter: f64,
    pub agreement: Summary,
    pub n_nodes: Summary,
    pub n_edges: Summary,
}

impl BenchmarkRow {
    pub fn method(&self) -> String {
        format!("{}+{}", self.graph_search, self.walk)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    /// Training-split runs made while tuning, then every test-split run.
    pub cases: Vec<CaseOutcome>,
}

impl BenchmarkReport {
    pub fn result_rows(&self) -> Vec<ResultRow> {
        let mut out = Vec::new();
        for r in &self.rows {
            for (metric, s) in [
                ("agreement", r.agreement),
                ("n_nodes", r.n_nodes),
                ("n_edges", r.n_edges),
            ] {
                out.push(ResultRow {
                    method: r.method(),
                    metric: metric.into(),
                    mean: s.mean,
                    std: s.std,
                    n: s.n,
                });
            }
        }
        out
    }
}

fn run_case(
    spec: &ExperimentSpec,
    methods: &MethodsSection,
    split: Split,
    index: usize,
    gs: GraphSearchKind,
    wa: WalkKind,
) -> Result<CaseOutcome> {
    let seed = case_seed(spec.seeds.master, split, index);
    let wrap = |e: Error| Error::Case {
        index,
        source: Box::new(e),
    };
    let case = sample_case(spec, seed).map_err(wrap)?;
    let r = run_pipeline(
        &case,
        &spec.sim,
        methods,
        gs,
        wa,
        spec.seeds.replicates,
        derive_seed(seed, &[9]),
    )
    .map_err(wrap)?;
    Ok(CaseOutcome {
        split,
        index,
        seed,
        graph_search: gs,
        walk: wa,
        hyperparameter: methods.grid_value(gs),
        agreement: r.mean,
        n_nodes: r.n_nodes,
        n_edges: r.n_edges,
    })
}

/// Picks the grid value with the best mean training agreement (first wins ties).
fn tune(
    spec: &ExperimentSpec,
    gs: GraphSearchKind,
    wa: WalkKind,
    log: &mut Vec<CaseOutcome>,
) -> Result<MethodsSection> {
    let grid = spec.methods.grid_values(gs);
    let mut best: Option<(f64, MethodsSection)> = None;
    for value in grid {
        let methods = spec.methods.with_grid_value(gs, value);
        let mut scores = Vec::with_capacity(spec.seeds.n_train);
        for i in 0..spec.seeds.n_train {
            let o = run_case(spec, &methods, Split::Train, i, gs, wa)?;
            scores.push(o.agreement);
            log.push(o);
        }
        let m = mean_std(&scores).0;
        if best.as_ref().is_none_or(|(b, _)| m > *b) {
            best = Some((m, methods));
        }
    }
    Ok(best.map_or_else(|| spec.methods.clone(), |(_, m)| m))
}

/// Every configured (graph search, walk) pair: tune on the training split,
/// evaluate on the test split.
pub fn run_benchmark(spec: &ExperimentSpec) -> Result<BenchmarkReport> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut cases = Vec::new();
    for &gs in &spec.methods.graph_search {
        for &wa in &spec.methods.walk {
            let methods = tune(spec, gs, wa, &mut cases)?;
            let mut test = Vec::with_capacity(spec.seeds.n_test);
            for i in 0..spec.seeds.n_test {
                test.push(run_case(spec, &methods, Split::Test, i, gs, wa)?);
            }
            let col = |f: fn(&CaseOutcome) -> f64| test.iter().map(f).collect::<Vec<_>>();
            rows.push(BenchmarkRow {
                graph_search: gs,
                walk: wa,
                hyperparameter: methods.grid_value(gs),
                agreement: Summary::of(&col(|c| c.agreement)),
                n_nodes: Summary::of(&col(|c| c.n_nodes)),
                n_edges: Summary::of(&col(|c| c.n_edges)),
            });
            cases.extend(test);
        }
    }
    Ok(BenchmarkReport { rows, cases })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Population,
    Circles,
    Beta,
    Gamma,
}

impl SweepKind {
    pub const ALL: [SweepKind; 4] = [
        SweepKind::Population,
        SweepKind::Circles,
        SweepKind::Beta,
        SweepKind::Gamma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Population => "population",
            SweepKind::Circles => "circles",
            SweepKind::Beta => "beta",
            SweepKind::Gamma => "gamma",
        }
    }

    /// Default sweep interval, scaled down for population.
    pub fn default_range(self) -> [f64; 2] {
        match self {
            SweepKind::Population => [100.0, 3000.0],
            SweepKind::Circles => [10.0, 100.0],
            SweepKind::Beta => [0.037, 0.37],
            SweepKind::Gamma => [60.0, 380.0],
        }
    }

    pub fn is_spatial(self) -> bool {
        matches!(self, SweepKind::Population | SweepKind::Circles)
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl FromStr for SweepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SweepKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown sweep `{s}` (population, circles, beta, gamma)"
                ))
            })
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Base scenario for the sweeps: one 50 m circle, point parameter values.
pub fn sensitivity_base() -> ExperimentSpec {
    ExperimentSpec {
        params: ParamRanges {
            beta: [0.07, 0.07],
            gamma: [180, 180],
            rho: [0.95, 0.95],
            psi: [0.1, 0.1],
        },
        env: EnvSpec::Circles(vec![Circle::new(Point::new(50.0, 50.0), 50.0)]),
        methods: MethodsSection {
            graph_search: vec![GraphSearchKind::Tsxm],
            walk: vec![WalkKind::Mac],
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Extent used when placing the 2 m circles of the circle-count sweep.
const CIRCLE_SWEEP_EXTENT: f64 = 40.0;

/// The base spec with the swept quantity set to `value`.
pub fn apply_sweep(base: &ExperimentSpec, sweep: SweepKind, value: f64) -> ExperimentSpec {
    let mut s = base.clone();
    match sweep {
        SweepKind::Population => s.sim.population = value.round().max(1.0) as usize,
        SweepKind::Circles => {
            let c = value.round().max(1.0) as u32;
            s.env = EnvSpec::Synthetic(EnvGenParams {
                n_circles: (c, c),
                radius: (2.0, 2.0),
                extent: CIRCLE_SWEEP_EXTENT,
                ..Default::default()
            });
        }
        SweepKind::Beta => s.params.beta = [value, value],
        SweepKind::Gamma => {
            let g = value.round().max(1.0) as u32;
            s.params.gamma = [g, g];
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweep: SweepKind,
    pub range: [f64; 2],
    pub graph_search: GraphSearchKind,
    pub walk: WalkKind,
    pub agreement: Summary,
    /// (swept value, agreement) per case.
    pub cases: Vec<(f64, f64)>,
}

impl SweepReport {
    pub fn result_row(&self) -> ResultRow {
        ResultRow {
            method: format!("{}+{}:{}", self.graph_search, self.walk, self.sweep),
            metric: "agreement".into(),
            mean: self.agreement.mean,
            std: self.agreement.std,
            n: self.agreement.n,
        }
    }
}

/// `n` cases with the swept quantity uniform in `range` and everything else
/// taken from `base`. The pipeline is the base spec's first graph search and
/// first walk model.
pub fn run_sensitivity(
    base: &ExperimentSpec,
    sweep: SweepKind,
    range: [f64; 2],
    n: usize,
) -> Result<SweepReport> {
    base.validate()?;
    if n == 0 || !(range[0] <= range[1]) {
        return Err(Error::Config(format!(
            "bad sweep: n = {n}, range = {range:?}"
        )));
    }
    let gs = base.methods.graph_search[0];
    let wa = base.methods.walk[0];
    let mut cases = Vec::with_capacity(n);
    for i in 0..n {
        let seed = derive_seed(
            case_seed(base.seeds.master, Split::Sensitivity, i),
            &[sweep.tag()],
        );
        let value = if range[0] == range[1] {
            range[0]
        } else {
            seeded(seed).random_range(range[0]..=range[1])
        };
        let spec = apply_sweep(base, sweep, value);
        spec.validate()?;
        let wrap = |e: Error| Error::Case {
            index: i,
            source: Box::new(e),
        };
        let case = sample_case(&spec, derive_seed(seed, &[1])).map_err(wrap)?;
        let r = run_pipeline(
            &case,
            &spec.sim,
            &spec.methods,
            gs,
            wa,
            spec.seeds.replicates,
            derive_seed(seed, &[2]),
        )
        .map_err(wrap)?;
        cases.push((value, r.mean));
    }
    let ag: Vec<f64> = cases.iter().map(|c| c.1).collect();
    Ok(SweepReport {
        sweep,
        range,
        graph_search: gs,
        walk: wa,
        agreement: Summary::of(&ag),
        cases,
    })
}

//! The simulation loop shared by both spatial representations, trajectory
//! recording, and the agreement score between two trajectories.
//!
//! Each step applies, in this fixed order: spontaneous transitions, one walk
//! move per agent, interaction, recording, then clock ticks for every agent
//! whose state did not change during the step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epi::{spontaneous_step, tick_clock, AgentEpi, EpiParams, MacroClass, ModelKind};
use crate::geom::Point;
use crate::graph::{
    graph_walk_step, node_interaction_step, GraphAgent, Occupancy, SpatialGraph, WalkContext,
    WalkDiagnostics, WalkPolicy,
};
use crate::norm::{
    norm_interaction_step, pull_random_walk_step, ContinuousEnv, SpatialAgent, WalkParams,
};
use crate::rng::seeded;
use crate::walk::WalkModel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    /// Run all `steps`.
    #[default]
    Horizon,
    /// Also stop early once no agent is infectious.
    NoInfectious,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of steps T.
    pub steps: usize,
    /// Step duration; scales within-node contacts in graph mode.
    pub dt: f64,
    pub model: ModelKind,
    #[serde(default)]
    pub stop: StopCondition,
}

impl SimConfig {
    pub fn new(model: ModelKind, steps: usize) -> Self {
        SimConfig {
            steps,
            dt: 1.0,
            model,
            stop: StopCondition::Horizon,
        }
    }
}

/// Compartment counts per step: `counts[t][c]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: ModelKind,
    pub population: usize,
    pub counts: Vec<Vec<u32>>,
}

impl Trajectory {
    /// Number of recorded rows (T + 1 for a full run).
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

pub fn count_compartments<'a>(
    model: ModelKind,
    agents: impl IntoIterator<Item = &'a AgentEpi>,
) -> Vec<u32> {
    let mut row = vec![0u32; model.n_compartments()];
    for a in agents {
        row[a.compartment()] += 1;
    }
    row
}

/// Agent positions per step: `frames[t][agent]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionLog {
    pub frames: Vec<Vec<Point>>,
}

impl PositionLog {
    pub fn n_agents(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Position series of one agent.
    pub fn series(&self, agent: usize) -> Vec<Point> {
        self.frames.iter().map(|f| f[agent]).collect()
    }
}

/// Node residency per step: `frames[t][agent]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeLog {
    pub frames: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Positions {
    Norm(PositionLog),
    Graph(NodeLog),
}

/// Per-step macro-class and infectious-clock ratio of every agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpiLog {
    pub classes: Vec<Vec<MacroClass>>,
    pub clock_ratio: Vec<Vec<f64>>,
}

impl EpiLog {
    fn push(&mut self, params: &EpiParams, agents: impl Iterator<Item = AgentEpi>) {
        let (c, r): (Vec<_>, Vec<_>) = agents
            .map(|a| (a.state.macro_class(), params.clock_ratio(&a)))
            .unzip();
        self.classes.push(c);
        self.clock_ratio.push(r);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimRecord {
    pub trajectory: Trajectory,
    pub positions: Positions,
    pub epi: EpiLog,
    pub walk_diagnostics: WalkDiagnostics,
}

#[derive(Clone, Debug)]
pub enum Population {
    Norm(Vec<SpatialAgent>),
    Graph(Vec<GraphAgent>),
}

#[derive(Clone, Copy)]
pub enum Space<'a> {
    Norm(&'a ContinuousEnv),
    Graph(&'a SpatialGraph, &'a WalkModel),
}

/// Runs one simulation in either representation.
pub fn run_sim(
    pop: Population,
    space: Space<'_>,
    params: &EpiParams,
    wp: &WalkParams,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimRecord> {
    match (pop, space) {
        (Population::Norm(p), Space::Norm(env)) => run_norm(p, env, params, wp, cfg, seed),
        (Population::Graph(p), Space::Graph(g, m)) => run_graph(p, g, m, params, cfg, seed),
        _ => Err(Error::Config(
            "population and space use different representations".into(),
        )),
    }
}

fn check_common(
    agents: impl Iterator<Item = AgentEpi>,
    params: &EpiParams,
    cfg: &SimConfig,
) -> Result<usize> {
    params.validate()?;
    if params.model() != cfg.model {
        return Err(Error::Config(format!(
            "parameters are for {}, config asks for {}",
            params.model().as_str(),
            cfg.model.as_str()
        )));
    }
    if !(cfg.dt > 0.0) {
        return Err(Error::Config("dt must be positive".into()));
    }
    let mut n = 0;
    for a in agents {
        if a.state.model() != cfg.model || !a.state.is_valid() {
            return Err(Error::Config(format!(
                "agent {n} has state {:?} not valid for the model",
                a.state
            )));
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::contract("population is empty"));
    }
    Ok(n)
}

/// Applies spontaneous transitions and returns the pre-step states.
fn spontaneous_phase<'a, R: Rng + ?Sized>(
    agents: impl Iterator<Item = &'a mut AgentEpi>,
    params: &EpiParams,
    rng: &mut R,
) -> Vec<AgentEpi> {
    agents
        .map(|a| {
            let before = *a;
            *a = spontaneous_step(before, params, rng);
            before
        })
        .collect()
}

fn tick_phase<'a>(agents: impl Iterator<Item = &'a mut AgentEpi>, before: &[AgentEpi]) {
    // states never cycle within a step, so an unchanged state means no transition
    for (a, b) in agents.zip(before) {
        if a.state == b.state {
            *a = tick_clock(*a);
        }
    }
}

fn any_infectious<'a>(mut agents: impl Iterator<Item = &'a AgentEpi>) -> bool {
    agents.any(|a| a.state.is_infectious())
}

/// Called with `(t, states)` after each recorded frame, including t = 0.
pub type StepObserver<'a> = &'a mut dyn FnMut(usize, &[AgentEpi]);

fn observe<'a>(
    obs: &mut Option<StepObserver<'_>>,
    t: usize,
    agents: impl Iterator<Item = &'a AgentEpi>,
) {
    if let Some(f) = obs {
        let states: Vec<AgentEpi> = agents.copied().collect();
        f(t, &states);
    }
}

pub fn run_norm(
    pop: Vec<SpatialAgent>,
    env: &ContinuousEnv,
    params: &EpiParams,
    wp: &WalkParams,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimRecord> {
    run_norm_observed(pop, env, params, wp, cfg, seed, None)
}

/// [`run_norm`] reporting every agent's full state at each frame.
pub fn run_norm_observed(
    mut pop: Vec<SpatialAgent>,
    env: &ContinuousEnv,
    params: &EpiParams,
    wp: &WalkParams,
    cfg: &SimConfig,
    seed: u64,
    mut obs: Option<StepObserver<'_>>,
) -> Result<SimRecord> {
    let n = check_common(pop.iter().map(|a| a.epi), params, cfg)?;
    wp.validate()?;
    if let Some(i) = pop.iter().position(|a| !env.contains(a.pos)) {
        return Err(Error::contract(format!(
            "agent {i} starts outside the environment"
        )));
    }
    let mut rng = seeded(seed);
    let mut counts = vec![count_compartments(cfg.model, pop.iter().map(|a| &a.epi))];
    let mut frames = vec![pop.iter().map(|a| a.pos).collect::<Vec<_>>()];
    let mut epi = EpiLog {
        classes: Vec::new(),
        clock_ratio: Vec::new(),
    };
    epi.push(params, pop.iter().map(|a| a.epi));
    observe(&mut obs, 0, pop.iter().map(|a| &a.epi));

    for step in 1..=cfg.steps {
        if cfg.stop == StopCondition::NoInfectious && !any_infectious(pop.iter().map(|a| &a.epi)) {
            break;
        }
        let before = spontaneous_phase(pop.iter_mut().map(|a| &mut a.epi), params, &mut rng);
        for a in pop.iter_mut() {
            *a = pull_random_walk_step(*a, env, wp, &mut rng);
        }
        norm_interaction_step(&mut pop, params, wp, &mut rng);
        counts.push(count_compartments(cfg.model, pop.iter().map(|a| &a.epi)));
        frames.push(pop.iter().map(|a| a.pos).collect());
        epi.push(params, pop.iter().map(|a| a.epi));
        observe(&mut obs, step, pop.iter().map(|a| &a.epi));
        tick_phase(pop.iter_mut().map(|a| &mut a.epi), &before);
    }
    Ok(SimRecord {
        trajectory: Trajectory {
            model: cfg.model,
            population: n,
            counts,
        },
        positions: Positions::Norm(PositionLog { frames }),
        epi,
        walk_diagnostics: WalkDiagnostics::default(),
    })
}

pub fn run_graph<P: WalkPolicy>(
    pop: Vec<GraphAgent>,
    graph: &SpatialGraph,
    policy: &P,
    params: &EpiParams,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimRecord> {
    run_graph_observed(pop, graph, policy, params, cfg, seed, None)
}

/// [`run_graph`] reporting every agent's full state at each frame.
pub fn run_graph_observed<P: WalkPolicy>(
    mut pop: Vec<GraphAgent>,
    graph: &SpatialGraph,
    policy: &P,
    params: &EpiParams,
    cfg: &SimConfig,
    seed: u64,
    mut obs: Option<StepObserver<'_>>,
) -> Result<SimRecord> {
    let n = check_common(pop.iter().map(|a| a.epi), params, cfg)?;
    if let Some(i) = pop.iter().position(|a| a.node >= graph.n_nodes()) {
        return Err(Error::contract(format!(
            "agent {i} is on a node outside the graph"
        )));
    }
    let mut rng = seeded(seed);
    let mut diag = WalkDiagnostics::default();
    let mut counts = vec![count_compartments(cfg.model, pop.iter().map(|a| &a.epi))];
    let mut frames = vec![pop.iter().map(|a| a.node).collect::<Vec<_>>()];
    let mut epi = EpiLog {
        classes: Vec::new(),
        clock_ratio: Vec::new(),
    };
    epi.push(params, pop.iter().map(|a| a.epi));
    observe(&mut obs, 0, pop.iter().map(|a| &a.epi));
    let horizon = cfg.steps.max(1) as f64;

    for step in 1..=cfg.steps {
        if cfg.stop == StopCondition::NoInfectious && !any_infectious(pop.iter().map(|a| &a.epi)) {
            break;
        }
        let before = spontaneous_phase(pop.iter_mut().map(|a| &mut a.epi), params, &mut rng);
        let occupancy = Occupancy::tally(
            graph.n_nodes(),
            pop.iter().map(|a| (a.node, a.epi.state.macro_class())),
        );
        let t_frac = (step - 1) as f64 / horizon;
        for a in pop.iter_mut() {
            let ctx = WalkContext::build(
                graph,
                &occupancy,
                a.node,
                a.epi.state.macro_class(),
                params.clock_ratio(&a.epi),
                t_frac,
            );
            *a = graph_walk_step(*a, graph, policy, &ctx, &mut rng, &mut diag);
        }
        node_interaction_step(&mut pop, graph.n_nodes(), params, cfg.dt, &mut rng);
        counts.push(count_compartments(cfg.model, pop.iter().map(|a| &a.epi)));
        frames.push(pop.iter().map(|a| a.node).collect());
        epi.push(params, pop.iter().map(|a| a.epi));
        observe(&mut obs, step, pop.iter().map(|a| &a.epi));
        tick_phase(pop.iter_mut().map(|a| &mut a.epi), &before);
    }
    Ok(SimRecord {
        trajectory: Trajectory {
            model: cfg.model,
            population: n,
            counts,
        },
        positions: Positions::Graph(NodeLog { frames }),
        epi,
        walk_diagnostics: diag,
    })
}

/// Time-averaged total-variation overlap of two trajectories' compartment
/// histograms, in [0, 1].
pub fn agreement(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.model != b.model || a.population != b.population || a.counts.len() != b.counts.len() {
        return Err(Error::contract(
            "trajectories differ in model, population or length",
        ));
    }
    if a.counts.is_empty() || a.population == 0 {
        return Err(Error::contract("empty trajectory"));
    }
    let n = a.population as f64;
    let total: f64 = a
        .counts
        .iter()
        .zip(&b.counts)
        .map(|(ra, rb)| {
            let l1: f64 = ra
                .iter()
                .zip(rb)
                .map(|(x, y)| (*x as f64 - *y as f64).abs())
                .sum();
            1.0 - l1 / (2.0 * n)
        })
        .sum();
    Ok(total / a.counts.len() as f64)
}

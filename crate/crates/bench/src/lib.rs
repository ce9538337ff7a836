//! Fixtures shared by the benchmarks.

use normgraph_core::harness::{case_seed, sample_case, Case, ExperimentSpec, Split};
use normgraph_core::rng::derive_seed;
use normgraph_core::sim::{run_norm, PositionLog, Positions, SimConfig, SimRecord};

/// Default-spec case with `population` agents, simulated for `steps` steps.
pub fn norm_run(population: usize, steps: usize, index: usize) -> (Case, SimRecord) {
    let mut spec = ExperimentSpec::default();
    spec.sim.population = population;
    spec.sim.steps = steps;
    let seed = case_seed(7, Split::Test, index);
    let case = sample_case(&spec, seed).expect("default spec samples");
    let cfg = SimConfig::new(case.params.model(), steps);
    let rec = run_norm(
        case.population.clone(),
        &case.env,
        &case.params,
        &spec.sim.walk,
        &cfg,
        derive_seed(seed, &[0]),
    )
    .expect("norm run");
    (case, rec)
}

pub fn position_log(rec: &SimRecord) -> &PositionLog {
    match &rec.positions {
        Positions::Norm(log) => log,
        Positions::Graph(_) => panic!("expected a norm run"),
    }
}

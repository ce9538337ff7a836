use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{EnvSpec, ExperimentSpec, ParamRanges};
use crate::epi::{
    AgeGroup, AgentEpi, EpiParams, EpiState, ModelKind, Seird2Params, Seird2State, SirParams,
    SirState, Strain, StrainSet, TwoStrainParams, TwoStrainState,
};
use crate::norm::{generate_synthetic_env, ContinuousEnv, SpatialAgent};
use crate::rng::{derive_seed, seeded};
use crate::Result;

/// Which pool a case seed belongs to. Tags keep the pools disjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Sensitivity,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
            Split::Sensitivity => 2,
        }
    }
}

pub fn case_seed(master: u64, split: Split, index: usize) -> u64 {
    derive_seed(master, &[split.tag(), index as u64])
}

/// One sampled scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub seed: u64,
    pub params: EpiParams,
    pub env: ContinuousEnv,
    pub population: Vec<SpatialAgent>,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

pub fn sample_params<R: Rng + ?Sized>(
    model: ModelKind,
    pr: &ParamRanges,
    rng: &mut R,
) -> EpiParams {
    let mut gamma = || rng.random_range(pr.gamma[0]..=pr.gamma[1]);
    match model {
        ModelKind::Sir => {
            let g = gamma();
            EpiParams::Sir(SirParams {
                beta: uniform(rng, pr.beta),
                gamma: g,
            })
        }
        ModelKind::Seird2 => {
            let g = [gamma(), gamma()];
            let mut beta = [[[0.0; 2]; 2]; 2];
            for b in beta.iter_mut().flatten().flatten() {
                *b = uniform(rng, pr.beta);
            }
            EpiParams::Seird2(Seird2Params {
                beta,
                gamma: g,
                rho: [uniform(rng, pr.rho), uniform(rng, pr.rho)],
                psi: [uniform(rng, pr.psi), uniform(rng, pr.psi)],
            })
        }
        ModelKind::TwoStrain => {
            let g = [gamma(), gamma(), gamma(), gamma()];
            let mut beta = [0.0; 4];
            let mut rho = [0.0; 4];
            for r in 0..4 {
                beta[r] = uniform(rng, pr.beta);
                rho[r] = uniform(rng, pr.rho);
            }
            EpiParams::TwoStrain(TwoStrainParams {
                beta,
                gamma: g,
                rho,
            })
        }
    }
}

/// State of the `k`-th initially infected agent.
fn seed_state(model: ModelKind, k: usize) -> EpiState {
    match model {
        ModelKind::Sir => EpiState::Sir(SirState::Infected),
        ModelKind::Seird2 => EpiState::Seird2(Seird2State::Symptomatic),
        ModelKind::TwoStrain => EpiState::TwoStrain(TwoStrainState::Infected {
            recovered: StrainSet::EMPTY,
            strain: if k % 2 == 0 { Strain::One } else { Strain::Two },
        }),
    }
}

fn susceptible(model: ModelKind) -> EpiState {
    match model {
        ModelKind::Sir => EpiState::Sir(SirState::Susceptible),
        ModelKind::Seird2 => EpiState::Seird2(Seird2State::Susceptible),
        ModelKind::TwoStrain => EpiState::TwoStrain(TwoStrainState::Recovered(StrainSet::EMPTY)),
    }
}

pub fn n_initial_infected(population: usize, fraction: f64) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    ((fraction * population as f64).round() as usize).clamp(1, population)
}

/// Agents at uniform positions in the environment; the lowest ids are infected.
pub fn initial_population<R: Rng + ?Sized>(
    model: ModelKind,
    env: &ContinuousEnv,
    n: usize,
    infected_fraction: f64,
    child_fraction: f64,
    rng: &mut R,
) -> Vec<SpatialAgent> {
    let n_inf = n_initial_infected(n, infected_fraction);
    (0..n)
        .map(|i| {
            let state = if i < n_inf {
                seed_state(model, i)
            } else {
                susceptible(model)
            };
            let mut epi = AgentEpi::new(state);
            if model == ModelKind::Seird2 {
                let child = rng.random::<f64>() < child_fraction;
                epi = epi.with_age(if child {
                    AgeGroup::Child
                } else {
                    AgeGroup::Adult
                });
            }
            SpatialAgent::at(epi, env.sample_point(rng))
        })
        .collect()
}

/// Draws parameters, environment and initial population from `seed`.
pub fn sample_case(spec: &ExperimentSpec, seed: u64) -> Result<Case> {
    let mut rng = seeded(seed);
    let params = sample_params(spec.model, &spec.params, &mut rng);
    let env = match &spec.env {
        EnvSpec::Synthetic(gp) => generate_synthetic_env(&mut rng, gp)?,
        EnvSpec::Circles(c) => ContinuousEnv::new(c.clone())?,
    };
    let s = &spec.sim;
    let population = initial_population(
        spec.model,
        &env,
        s.population,
        s.initial_infected,
        s.child_fraction,
        &mut rng,
    );
    Ok(Case {
        seed,
        params,
        env,
        population,
    })
}

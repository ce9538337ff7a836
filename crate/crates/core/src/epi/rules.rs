//! Agent-level transition rules: spontaneous recovery or death, pairwise
//! infection, and the inner clock.

use rand::Rng;

use super::params::{EpiParams, TwoStrainParams};
use super::state::{AgentEpi, EpiState, Seird2State, SirState, TwoStrainState};

/// Time-driven transition: an infectious agent whose clock reached its
/// infectious duration recovers or dies. Everything else is returned unchanged.
pub fn spontaneous_step<R: Rng + ?Sized>(
    agent: AgentEpi,
    params: &EpiParams,
    rng: &mut R,
) -> AgentEpi {
    let Some(gamma) = params.duration(&agent) else {
        return agent;
    };
    // `>=` only differs from `==` for hand-built agents whose clock overshot
    if agent.clock < gamma {
        return agent;
    }
    let next = match (params, agent.state) {
        (EpiParams::Sir(_), _) => EpiState::Sir(SirState::Recovered),
        (EpiParams::Seird2(_), EpiState::Seird2(Seird2State::Asymptomatic)) => {
            EpiState::Seird2(Seird2State::Recovered)
        }
        (EpiParams::Seird2(p), _) => {
            if rng.random::<f64>() < p.rho[agent.age.index()] {
                EpiState::Seird2(Seird2State::Recovered)
            } else {
                EpiState::Seird2(Seird2State::Dead)
            }
        }
        (
            EpiParams::TwoStrain(p),
            EpiState::TwoStrain(TwoStrainState::Infected { recovered, strain }),
        ) => {
            let route = TwoStrainParams::route(recovered, strain).expect("valid infection");
            if rng.random::<f64>() < p.rho[route] {
                EpiState::TwoStrain(TwoStrainState::Recovered(recovered.with(strain)))
            } else {
                EpiState::TwoStrain(TwoStrainState::Dead)
            }
        }
        _ => return agent,
    };
    AgentEpi {
        state: next,
        clock: 0,
        age: agent.age,
    }
}

/// Per-contact infection probability of `source` on `target`, or `None` when
/// the pair cannot transmit (source not infectious, target immune, ...).
pub fn transmissibility(target: &AgentEpi, source: &AgentEpi, params: &EpiParams) -> Option<f64> {
    match (params, target.state, source.state) {
        (
            EpiParams::Sir(p),
            EpiState::Sir(SirState::Susceptible),
            EpiState::Sir(SirState::Infected),
        ) => Some(p.beta),
        (EpiParams::Seird2(p), EpiState::Seird2(Seird2State::Susceptible), EpiState::Seird2(s)) => {
            let symptom = match s {
                Seird2State::Symptomatic => 0,
                Seird2State::Asymptomatic => 1,
                _ => return None,
            };
            Some(p.beta[symptom][target.age.index()][source.age.index()])
        }
        (
            EpiParams::TwoStrain(p),
            EpiState::TwoStrain(TwoStrainState::Recovered(recovered)),
            EpiState::TwoStrain(TwoStrainState::Infected { strain, .. }),
        ) => TwoStrainParams::route(recovered, strain).map(|r| p.beta[r]),
        _ => None,
    }
}

/// State of `target` once infected by `source`. Assumes the pair transmits.
pub fn infected_by<R: Rng + ?Sized>(
    target: &AgentEpi,
    source: &AgentEpi,
    params: &EpiParams,
    rng: &mut R,
) -> AgentEpi {
    let state = match (params, source.state, target.state) {
        (EpiParams::Sir(_), _, _) => EpiState::Sir(SirState::Infected),
        (EpiParams::Seird2(p), _, _) => {
            if rng.random::<f64>() < p.psi[target.age.index()] {
                EpiState::Seird2(Seird2State::Asymptomatic)
            } else {
                EpiState::Seird2(Seird2State::Symptomatic)
            }
        }
        (
            EpiParams::TwoStrain(_),
            EpiState::TwoStrain(TwoStrainState::Infected { strain, .. }),
            EpiState::TwoStrain(TwoStrainState::Recovered(recovered)),
        ) => EpiState::TwoStrain(TwoStrainState::Infected { recovered, strain }),
        _ => return *target,
    };
    AgentEpi {
        state,
        clock: 0,
        age: target.age,
    }
}

/// One contact trial between `a` and `b`. If exactly one is infectious and the
/// other is susceptible to that infection, the latter is infected with
/// probability `beta * p_scale`.
pub fn contact_infect<R: Rng + ?Sized>(
    a: AgentEpi,
    b: AgentEpi,
    params: &EpiParams,
    p_scale: f64,
    rng: &mut R,
) -> (AgentEpi, AgentEpi) {
    match (a.state.is_infectious(), b.state.is_infectious()) {
        (true, false) => (a, trial(b, &a, params, p_scale, rng)),
        (false, true) => (trial(a, &b, params, p_scale, rng), b),
        _ => (a, b),
    }
}

fn trial<R: Rng + ?Sized>(
    target: AgentEpi,
    source: &AgentEpi,
    params: &EpiParams,
    p_scale: f64,
    rng: &mut R,
) -> AgentEpi {
    match transmissibility(&target, source, params) {
        Some(beta) if rng.random::<f64>() < beta * p_scale => {
            infected_by(&target, source, params, rng)
        }
        _ => target,
    }
}

pub fn tick_clock(agent: AgentEpi) -> AgentEpi {
    AgentEpi {
        clock: agent.clock.saturating_add(1),
        ..agent
    }
}

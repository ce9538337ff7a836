use serde::{Deserialize, Serialize};

use super::state::{
    AgentEpi, EpiState, ModelKind, Seird2State, SirState, Strain, StrainSet, TwoStrainState,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    /// Infection probability per contact pair per step.
    pub beta: f64,
    /// Infectious duration in steps.
    pub gamma: u32,
}

/// Two age groups; index 0 is children, 1 adults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seird2Params {
    /// `beta[source symptom][target age][source age]`, symptom 0 = symptomatic, 1 = asymptomatic.
    pub beta: [[[f64; 2]; 2]; 2],
    pub gamma: [u32; 2],
    /// Recovery probability of symptomatic cases; the complement dies.
    pub rho: [f64; 2],
    /// Probability that a new infection takes the asymptomatic branch.
    pub psi: [f64; 2],
}

/// Per-route parameters for the two-strain model, indexed by [`TwoStrainParams::route`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStrainParams {
    pub beta: [f64; 4],
    pub gamma: [u32; 4],
    pub rho: [f64; 4],
}

impl TwoStrainParams {
    /// Route of an infection with `strain` in a host that recovered from `recovered`:
    /// 0 = (∅,1), 1 = (∅,2), 2 = ({2},1), 3 = ({1},2). `None` if the host is immune.
    pub fn route(recovered: StrainSet, strain: Strain) -> Option<usize> {
        if recovered.contains(strain) {
            return None;
        }
        Some(match (recovered == StrainSet::EMPTY, strain) {
            (true, Strain::One) => 0,
            (true, Strain::Two) => 1,
            (false, Strain::One) => 2,
            (false, Strain::Two) => 3,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum EpiParams {
    Sir(SirParams),
    Seird2(Seird2Params),
    TwoStrain(TwoStrainParams),
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} = {v} outside [0, 1]")))
    }
}

fn check_gamma(v: u32) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::InvalidParams("gamma must be >= 1 step".into()))
    }
}

impl EpiParams {
    pub fn model(&self) -> ModelKind {
        match self {
            EpiParams::Sir(_) => ModelKind::Sir,
            EpiParams::Seird2(_) => ModelKind::Seird2,
            EpiParams::TwoStrain(_) => ModelKind::TwoStrain,
        }
    }

    /// Unweighted mean of the per-contact transmission probabilities.
    pub fn mean_beta(&self) -> f64 {
        match self {
            EpiParams::Sir(p) => p.beta,
            EpiParams::Seird2(p) => p.beta.iter().flatten().flatten().sum::<f64>() / 8.0,
            EpiParams::TwoStrain(p) => p.beta.iter().sum::<f64>() / 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EpiParams::Sir(p) => {
                check_prob("beta", p.beta)?;
                check_gamma(p.gamma)
            }
            EpiParams::Seird2(p) => {
                for b in p.beta.iter().flatten().flatten() {
                    check_prob("beta", *b)?;
                }
                for a in 0..2 {
                    check_gamma(p.gamma[a])?;
                    check_prob("rho", p.rho[a])?;
                    check_prob("psi", p.psi[a])?;
                }
                Ok(())
            }
            EpiParams::TwoStrain(p) => {
                for r in 0..4 {
                    check_prob("beta", p.beta[r])?;
                    check_gamma(p.gamma[r])?;
                    check_prob("rho", p.rho[r])?;
                }
                Ok(())
            }
        }
    }

    /// Infectious duration for an infectious agent, `None` otherwise.
    pub fn duration(&self, agent: &AgentEpi) -> Option<u32> {
        match (self, agent.state) {
            (EpiParams::Sir(p), EpiState::Sir(SirState::Infected)) => Some(p.gamma),
            (
                EpiParams::Seird2(p),
                EpiState::Seird2(Seird2State::Symptomatic | Seird2State::Asymptomatic),
            ) => Some(p.gamma[agent.age.index()]),
            (
                EpiParams::TwoStrain(p),
                EpiState::TwoStrain(TwoStrainState::Infected { recovered, strain }),
            ) => TwoStrainParams::route(recovered, strain).map(|r| p.gamma[r]),
            _ => None,
        }
    }

    /// Fraction of the infectious period already elapsed, in [0, 1]; zero for
    /// agents that are not infectious.
    pub fn clock_ratio(&self, agent: &AgentEpi) -> f64 {
        match self.duration(agent) {
            Some(g) => (agent.clock as f64 / g as f64).min(1.0),
            None => 0.0,
        }
    }
}

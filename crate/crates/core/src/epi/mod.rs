//! Temporal epidemic models: SIR, two-age-group SEIRD and two-strain SIR.

mod ode;
mod params;
mod rules;
mod state;

pub use ode::{integrate_rk4, ode_rhs, rk4};
pub use params::{EpiParams, Seird2Params, SirParams, TwoStrainParams};
pub use rules::{contact_infect, infected_by, spontaneous_step, tick_clock, transmissibility};
pub use state::{
    AgeGroup, AgentEpi, EpiState, MacroClass, ModelKind, Seird2State, SirState, Strain, StrainSet,
    TwoStrainState,
};

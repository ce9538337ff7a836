use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::epi::ModelKind;
use crate::norm::{Circle, EnvGenParams, WalkParams};
use crate::search::{GaParams, QuadtreeParams, TsxmParams};
use crate::walk::{MacTrainParams, NeighborBins};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSearchKind {
    Quadtree,
    Ga,
    Tsxm,
}

impl GraphSearchKind {
    pub const ALL: [GraphSearchKind; 3] = [
        GraphSearchKind::Quadtree,
        GraphSearchKind::Ga,
        GraphSearchKind::Tsxm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphSearchKind::Quadtree => "quadtree",
            GraphSearchKind::Ga => "ga",
            GraphSearchKind::Tsxm => "tsxm",
        }
    }
}

impl FromStr for GraphSearchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GraphSearchKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown graph search `{s}` (quadtree, ga, tsxm)")))
    }
}

impl fmt::Display for GraphSearchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkKind {
    Mc,
    Mac,
}

impl WalkKind {
    pub const ALL: [WalkKind; 2] = [WalkKind::Mc, WalkKind::Mac];

    pub fn as_str(self) -> &'static str {
        match self {
            WalkKind::Mc => "mc",
            WalkKind::Mac => "mac",
        }
    }
}

impl FromStr for WalkKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        WalkKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown walk model `{s}` (mc, mac)")))
    }
}

impl fmt::Display for WalkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Closed sampling ranges for the epidemic parameters. Every entry of a
/// model's parameter arrays is drawn independently from the same range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamRanges {
    pub beta: [f64; 2],
    pub gamma: [u32; 2],
    pub rho: [f64; 2],
    pub psi: [f64; 2],
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            beta: [0.037, 0.1],
            gamma: [120, 240],
            rho: [0.9, 0.99],
            psi: [0.05, 0.2],
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        let prob = |r: [f64; 2]| 0.0 <= r[0] && r[0] <= r[1] && r[1] <= 1.0;
        if !prob(self.beta)
            || !prob(self.rho)
            || !prob(self.psi)
            || self.gamma[0] < 1
            || self.gamma[0] > self.gamma[1]
        {
            return Err(Error::Config(format!("bad parameter ranges {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Synthetic(EnvGenParams),
    Circles(Vec<Circle>),
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Synthetic(EnvGenParams::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub population: usize,
    pub steps: usize,
    /// Graph-mode step duration; calibrated from the norm log when absent.
    pub contact_dt: Option<f64>,
    /// Share of agents infected at t = 0 (lowest ids first, at least one).
    pub initial_infected: f64,
    /// Probability that an agent is a child (two-age model only).
    pub child_fraction: f64,
    pub walk: WalkParams,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            population: 200,
            steps: 200,
            contact_dt: None,
            initial_infected: 0.01,
            child_fraction: 0.5,
            walk: WalkParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McParams {
    pub alpha_s: f64,
    pub bins: NeighborBins,
}

impl Default for McParams {
    fn default() -> Self {
        McParams {
            alpha_s: 1.0,
            bins: NeighborBins::default(),
        }
    }
}

/// Hyperparameter values tried on the training cases. An empty list keeps
/// the configured value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub quadtree_theta_split: Vec<f64>,
    pub ga_r_cover: Vec<f64>,
    pub tsxm_epsilon: Vec<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            quadtree_theta_split: vec![0.3, 0.5, 0.7],
            ga_r_cover: vec![5.0, 10.0, 20.0],
            tsxm_epsilon: vec![4, 6, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodsSection {
    pub graph_search: Vec<GraphSearchKind>,
    pub walk: Vec<WalkKind>,
    pub quadtree: QuadtreeParams,
    pub ga: GaParams,
    pub tsxm: TsxmParams,
    pub mc: McParams,
    pub mac: MacTrainParams,
    pub grid: GridSection,
}

impl Default for MethodsSection {
    fn default() -> Self {
        MethodsSection {
            graph_search: GraphSearchKind::ALL.to_vec(),
            walk: WalkKind::ALL.to_vec(),
            quadtree: QuadtreeParams::default(),
            ga: GaParams::default(),
            tsxm: TsxmParams::default(),
            mc: McParams::default(),
            mac: MacTrainParams::default(),
            grid: GridSection::default(),
        }
    }
}

impl MethodsSection {
    /// A copy with one grid value applied to `gs`'s tuned hyperparameter.
    pub fn with_grid_value(&self, gs: GraphSearchKind, value: f64) -> MethodsSection {
        let mut m = self.clone();
        match gs {
            GraphSearchKind::Quadtree => m.quadtree.theta_split = value,
            GraphSearchKind::Ga => m.ga.r_cover = value,
            GraphSearchKind::Tsxm => m.tsxm.epsilon = value as usize,
        }
        m
    }

    pub fn grid_values(&self, gs: GraphSearchKind) -> Vec<f64> {
        match gs {
            GraphSearchKind::Quadtree => self.grid.quadtree_theta_split.clone(),
            GraphSearchKind::Ga => self.grid.ga_r_cover.clone(),
            GraphSearchKind::Tsxm => self.grid.tsxm_epsilon.iter().map(|&e| e as f64).collect(),
        }
    }

    pub fn grid_value(&self, gs: GraphSearchKind) -> f64 {
        match gs {
            GraphSearchKind::Quadtree => self.quadtree.theta_split,
            GraphSearchKind::Ga => self.ga.r_cover,
            GraphSearchKind::Tsxm => self.tsxm.epsilon as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedsSection {
    pub master: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub replicates: usize,
}

impl Default for SeedsSection {
    fn default() -> Self {
        SeedsSection {
            master: 0,
            n_train: 30,
            n_test: 10,
            replicates: 1,
        }
    }
}

/// A complete experiment description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub model: ModelKind,
    pub params: ParamRanges,
    pub env: EnvSpec,
    pub sim: SimSection,
    pub methods: MethodsSection,
    pub seeds: SeedsSection,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            model: ModelKind::Sir,
            params: ParamRanges::default(),
            env: EnvSpec::default(),
            sim: SimSection::default(),
            methods: MethodsSection::default(),
            seeds: SeedsSection::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.sim
            .walk
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let s = &self.sim;
        if s.population == 0 || s.steps == 0 {
            return Err(Error::Config(
                "population and steps must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&s.initial_infected) || !(0.0..=1.0).contains(&s.child_fraction) {
            return Err(Error::Config(
                "initial_infected and child_fraction must lie in [0, 1]".into(),
            ));
        }
        if s.contact_dt.is_some_and(|dt| !(dt > 0.0 && dt.is_finite())) {
            return Err(Error::Config("contact_dt must be positive".into()));
        }
        if self.seeds.n_train < 1 || self.seeds.n_test < 1 || self.seeds.replicates < 1 {
            return Err(Error::Config(
                "n_train, n_test and replicates must be at least 1".into(),
            ));
        }
        let m = &self.methods;
        if m.graph_search.is_empty() || m.walk.is_empty() {
            return Err(Error::Config(
                "at least one graph search and one walk model are required".into(),
            ));
        }
        m.ga.validate()?;
        m.tsxm.validate()?;
        m.mac.validate()?;
        if !(m.mc.alpha_s >= 0.0) {
            return Err(Error::Config("mc.alpha_s must be non-negative".into()));
        }
        if let EnvSpec::Circles(c) = &self.env {
            crate::norm::ContinuousEnv::new(c.clone()).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

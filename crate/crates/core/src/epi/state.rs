use serde::{Deserialize, Serialize};

/// Which temporal model a population follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sir,
    /// Susceptible / symptomatic / asymptomatic / recovered / dead, two age groups.
    Seird2,
    TwoStrain,
}

impl ModelKind {
    pub fn compartment_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Sir => &["S", "I", "R"],
            ModelKind::Seird2 => &[
                "S_c", "S_a", "Is_c", "Ia_c", "Is_a", "Ia_a", "R_c", "R_a", "D_c", "D_a",
            ],
            ModelKind::TwoStrain => &[
                "R_0", "R_1", "R_2", "R_12", "R_0I_1", "R_0I_2", "R_1I_2", "R_2I_1", "D",
            ],
        }
    }

    pub fn n_compartments(self) -> usize {
        self.compartment_names().len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Sir => "sir",
            ModelKind::Seird2 => "seird2",
            ModelKind::TwoStrain => "two_strain",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "sir" => Ok(ModelKind::Sir),
            "seird2" => Ok(ModelKind::Seird2),
            "two_strain" => Ok(ModelKind::TwoStrain),
            other => Err(crate::Error::Parse(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum AgeGroup {
    Child,
    #[default]
    Adult,
}

impl AgeGroup {
    pub fn index(self) -> usize {
        match self {
            AgeGroup::Child => 0,
            AgeGroup::Adult => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strain {
    One,
    Two,
}

impl Strain {
    fn bit(self) -> u8 {
        match self {
            Strain::One => 1,
            Strain::Two => 2,
        }
    }

    pub fn other(self) -> Strain {
        match self {
            Strain::One => Strain::Two,
            Strain::Two => Strain::One,
        }
    }
}

/// Set of strains an agent has recovered from.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct StrainSet(u8);

impl StrainSet {
    pub const EMPTY: StrainSet = StrainSet(0);
    pub const BOTH: StrainSet = StrainSet(3);

    pub fn only(s: Strain) -> StrainSet {
        StrainSet(s.bit())
    }

    pub fn contains(self, s: Strain) -> bool {
        self.0 & s.bit() != 0
    }

    pub fn with(self, s: Strain) -> StrainSet {
        StrainSet(self.0 | s.bit())
    }

    pub fn is_subset(self, other: StrainSet) -> bool {
        self.0 & !other.0 == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SirState {
    Susceptible,
    Infected,
    Recovered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Seird2State {
    Susceptible,
    Symptomatic,
    Asymptomatic,
    Recovered,
    Dead,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TwoStrainState {
    Recovered(StrainSet),
    /// Infected with `strain`, having previously recovered from `recovered`.
    /// Valid only when `strain` is not in `recovered`.
    Infected {
        recovered: StrainSet,
        strain: Strain,
    },
    Dead,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpiState {
    Sir(SirState),
    Seird2(Seird2State),
    TwoStrain(TwoStrainState),
}

/// Coarse grouping shared by all three models, used to featurize walks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MacroClass {
    Susceptible,
    Infectious,
    Removed,
}

impl MacroClass {
    pub const ALL: [MacroClass; 3] = [
        MacroClass::Susceptible,
        MacroClass::Infectious,
        MacroClass::Removed,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl EpiState {
    pub fn model(self) -> ModelKind {
        match self {
            EpiState::Sir(_) => ModelKind::Sir,
            EpiState::Seird2(_) => ModelKind::Seird2,
            EpiState::TwoStrain(_) => ModelKind::TwoStrain,
        }
    }

    pub fn is_valid(self) -> bool {
        match self {
            EpiState::TwoStrain(TwoStrainState::Infected { recovered, strain }) => {
                !recovered.contains(strain)
            }
            _ => true,
        }
    }

    pub fn is_infectious(self) -> bool {
        matches!(
            self,
            EpiState::Sir(SirState::Infected)
                | EpiState::Seird2(Seird2State::Symptomatic | Seird2State::Asymptomatic)
                | EpiState::TwoStrain(TwoStrainState::Infected { .. })
        )
    }

    pub fn is_dead(self) -> bool {
        matches!(
            self,
            EpiState::Seird2(Seird2State::Dead) | EpiState::TwoStrain(TwoStrainState::Dead)
        )
    }

    /// States no operation can leave.
    pub fn is_absorbing(self) -> bool {
        matches!(
            self,
            EpiState::Sir(SirState::Recovered)
                | EpiState::Seird2(Seird2State::Recovered | Seird2State::Dead)
                | EpiState::TwoStrain(
                    TwoStrainState::Dead | TwoStrainState::Recovered(StrainSet::BOTH)
                )
        )
    }

    pub fn macro_class(self) -> MacroClass {
        if self.is_infectious() {
            MacroClass::Infectious
        } else if self.is_absorbing() {
            MacroClass::Removed
        } else {
            MacroClass::Susceptible
        }
    }

    /// Column of this state in the model's trajectory layout.
    pub fn compartment(self, age: AgeGroup) -> usize {
        let a = age.index();
        match self {
            EpiState::Sir(s) => match s {
                SirState::Susceptible => 0,
                SirState::Infected => 1,
                SirState::Recovered => 2,
            },
            EpiState::Seird2(s) => match s {
                Seird2State::Susceptible => a,
                Seird2State::Symptomatic => 2 + 2 * a,
                Seird2State::Asymptomatic => 3 + 2 * a,
                Seird2State::Recovered => 6 + a,
                Seird2State::Dead => 8 + a,
            },
            EpiState::TwoStrain(s) => match s {
                TwoStrainState::Recovered(set) => set.0 as usize,
                TwoStrainState::Infected { recovered, strain } => match (recovered.0, strain) {
                    (0, Strain::One) => 4,
                    (0, Strain::Two) => 5,
                    (_, Strain::Two) => 6,
                    (_, Strain::One) => 7,
                },
                TwoStrainState::Dead => 8,
            },
        }
    }
}

/// Epidemiological part of an agent: state, inner clock and age group.
///
/// `clock` counts steps since the last state change. `age` only matters for
/// the two-age-group model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentEpi {
    pub state: EpiState,
    pub clock: u32,
    pub age: AgeGroup,
}

impl AgentEpi {
    pub fn new(state: EpiState) -> Self {
        AgentEpi {
            state,
            clock: 0,
            age: AgeGroup::Adult,
        }
    }

    pub fn with_age(mut self, age: AgeGroup) -> Self {
        self.age = age;
        self
    }

    pub fn compartment(&self) -> usize {
        self.state.compartment(self.age)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compartments_are_a_bijection() {
        let mut seen = vec![false; 9];
        let sets = [
            StrainSet::EMPTY,
            StrainSet::only(Strain::One),
            StrainSet::only(Strain::Two),
            StrainSet::BOTH,
        ];
        for s in sets {
            seen[EpiState::TwoStrain(TwoStrainState::Recovered(s)).compartment(AgeGroup::Adult)] =
                true;
            for strain in [Strain::One, Strain::Two] {
                if !s.contains(strain) {
                    let st = EpiState::TwoStrain(TwoStrainState::Infected {
                        recovered: s,
                        strain,
                    });
                    seen[st.compartment(AgeGroup::Adult)] = true;
                }
            }
        }
        seen[EpiState::TwoStrain(TwoStrainState::Dead).compartment(AgeGroup::Adult)] = true;
        assert!(seen.iter().all(|&b| b));

        let mut seird = vec![false; 10];
        for age in [AgeGroup::Child, AgeGroup::Adult] {
            for s in [
                Seird2State::Susceptible,
                Seird2State::Symptomatic,
                Seird2State::Asymptomatic,
                Seird2State::Recovered,
                Seird2State::Dead,
            ] {
                let c = EpiState::Seird2(s).compartment(age);
                assert!(!seird[c]);
                seird[c] = true;
            }
        }
        assert!(seird.iter().all(|&b| b));
    }

    #[test]
    fn invalid_two_strain_infection() {
        let st = EpiState::TwoStrain(TwoStrainState::Infected {
            recovered: StrainSet::only(Strain::One),
            strain: Strain::One,
        });
        assert!(!st.is_valid());
    }

    #[test]
    fn macro_classes() {
        assert_eq!(
            EpiState::Sir(SirState::Recovered).macro_class(),
            MacroClass::Removed
        );
        let partial = EpiState::TwoStrain(TwoStrainState::Recovered(StrainSet::only(Strain::Two)));
        assert_eq!(partial.macro_class(), MacroClass::Susceptible);
        assert!(EpiState::Seird2(Seird2State::Dead).is_dead());
    }
}

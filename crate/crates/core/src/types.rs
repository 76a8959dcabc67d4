//! Domain types shared by the allocator, environments and learners.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convex weight between utility (0) and fairness (1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TradeoffWeight(f64);

impl TradeoffWeight {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidValue(format!("beta {beta} outside [0, 1]")));
        }
        Ok(Self(beta))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Unnormalized form `beta / (1 - beta)`; undefined at `beta = 1`.
    pub fn eta(self) -> Result<f64> {
        eta_of(self)
    }
}

impl TryFrom<f64> for TradeoffWeight {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TradeoffWeight> for f64 {
    fn from(w: TradeoffWeight) -> f64 {
        w.0
    }
}

pub fn eta_of(beta: TradeoffWeight) -> Result<f64> {
    if beta.0 >= 1.0 {
        return Err(Error::EtaUndefined);
    }
    Ok(beta.0 / (1.0 - beta.0))
}

/// Per-step availability of each of the K resource types.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceCapacities(pub Vec<f64>);

impl ResourceCapacities {
    pub fn new(caps: Vec<f64>) -> Result<Self> {
        if caps.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidValue("capacities must be finite and >= 0".into()));
        }
        Ok(Self(caps))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAction {
    pub action_id: usize,
    /// Post-decision features of the agent taking this action.
    pub features: Vec<f64>,
    /// Resource consumption per type; all zero for the null action.
    pub consumption: Vec<f64>,
    pub is_null: bool,
}

impl CandidateAction {
    pub fn null(action_id: usize, features: Vec<f64>, k: usize) -> Self {
        Self { action_id, features, consumption: vec![0.0; k], is_null: true }
    }

    pub fn consuming(action_id: usize, features: Vec<f64>, consumption: Vec<f64>) -> Self {
        Self { action_id, features, consumption, is_null: false }
    }
}

/// Candidate actions for every agent at one decision step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    pub per_agent: Vec<Vec<CandidateAction>>,
}

impl CandidateSet {
    pub fn new(per_agent: Vec<Vec<CandidateAction>>) -> Self {
        Self { per_agent }
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.per_agent.iter().flatten().next().map(|c| c.features.len())
    }

    /// Number of joint actions (product of list lengths), saturating.
    pub fn joint_size(&self) -> u128 {
        self.per_agent
            .iter()
            .fold(1u128, |acc, l| acc.saturating_mul(l.len() as u128))
    }

    /// Features of the chosen candidate for every agent.
    pub fn chosen_features(&self, alloc: &JointAllocation) -> Vec<Vec<f64>> {
        self.per_agent
            .iter()
            .zip(&alloc.chosen)
            .map(|(list, &a)| list[a].features.clone())
            .collect()
    }
}

/// Index of the chosen candidate for every agent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JointAllocation {
    pub chosen: Vec<usize>,
}

impl JointAllocation {
    pub fn new(chosen: Vec<usize>) -> Self {
        Self { chosen }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBundle {
    pub utility: Vec<f64>,
    pub fair: Vec<f64>,
    /// Increment applied to the payoff tracker; may differ from `utility`.
    pub payoff_delta: Vec<f64>,
}

impl RewardBundle {
    pub fn new(utility: Vec<f64>, fair: Vec<f64>, payoff_delta: Vec<f64>) -> Result<Self> {
        if utility.len() != fair.len() || utility.len() != payoff_delta.len() {
            return Err(Error::DimensionMismatch(format!(
                "reward vectors of lengths {}, {}, {}",
                utility.len(),
                fair.len(),
                payoff_delta.len()
            )));
        }
        Ok(Self { utility, fair, payoff_delta })
    }
}

/// One joint transition, self-contained so a replay never touches the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub chosen_features: Vec<Vec<f64>>,
    pub rewards: RewardBundle,
    pub successor_candidates: CandidateSet,
    pub successor_capacities: ResourceCapacities,
    pub done: bool,
}

/// Checks the structural invariants of a candidate set against the capacities.
pub fn validate_candidate_set(cs: &CandidateSet, caps: &ResourceCapacities) -> Result<()> {
    let k = caps.len();
    if caps.0.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidValue("capacities must be finite and >= 0".into()));
    }
    let dim = cs.feature_dim();
    for (agent, list) in cs.per_agent.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::EmptyCandidateList { agent });
        }
        let mut has_null = false;
        for (candidate, c) in list.iter().enumerate() {
            if c.consumption.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "agent {agent} candidate {candidate} consumes {} resource types, capacities have {k}",
                    c.consumption.len()
                )));
            }
            if Some(c.features.len()) != dim {
                return Err(Error::DimensionMismatch(format!(
                    "agent {agent} candidate {candidate} has {} features, expected {}",
                    c.features.len(),
                    dim.unwrap_or(0)
                )));
            }
            if c.consumption.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::NegativeConsumption { agent, candidate });
            }
            if c.is_null {
                if c.consumption.iter().any(|x| *x != 0.0) {
                    return Err(Error::InvalidValue(format!(
                        "null action of agent {agent} consumes resources"
                    )));
                }
                has_null = true;
            }
        }
        if !has_null {
            return Err(Error::MissingNullAction { agent });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn null_only(n: usize, k: usize) -> CandidateSet {
        CandidateSet::new((0..n).map(|_| vec![CandidateAction::null(0, vec![0.0], k)]).collect())
    }

    #[test]
    fn minimal_set_is_valid() {
        let caps = ResourceCapacities::new(vec![1.0]).unwrap();
        assert!(validate_candidate_set(&null_only(2, 1), &caps).is_ok());
    }

    #[test]
    fn empty_list_rejected() {
        let caps = ResourceCapacities::new(vec![1.0]).unwrap();
        let cs = CandidateSet::new(vec![vec![CandidateAction::null(0, vec![0.0], 1)], vec![]]);
        let err = validate_candidate_set(&cs, &caps).unwrap_err();
        assert!(err.to_string().contains("empty candidate list"));
    }

    #[test]
    fn consumption_shape_checked() {
        let caps = ResourceCapacities::new(vec![1.0]).unwrap();
        let cs = CandidateSet::new(vec![vec![
            CandidateAction::null(0, vec![0.0], 1),
            CandidateAction::consuming(1, vec![0.0], vec![1.0, 0.0]),
        ]]);
        let err = validate_candidate_set(&cs, &caps).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"));
    }

    #[test]
    fn missing_null_and_negative_consumption() {
        let caps = ResourceCapacities::new(vec![1.0]).unwrap();
        let cs = CandidateSet::new(vec![vec![CandidateAction::consuming(0, vec![0.0], vec![1.0])]]);
        assert!(matches!(
            validate_candidate_set(&cs, &caps),
            Err(Error::MissingNullAction { agent: 0 })
        ));
        let cs = CandidateSet::new(vec![vec![
            CandidateAction::null(0, vec![0.0], 1),
            CandidateAction::consuming(1, vec![0.0], vec![-1.0]),
        ]]);
        assert!(matches!(
            validate_candidate_set(&cs, &caps),
            Err(Error::NegativeConsumption { agent: 0, candidate: 1 })
        ));
    }

    #[test]
    fn feature_dim_must_agree() {
        let caps = ResourceCapacities::new(vec![]).unwrap();
        let cs = CandidateSet::new(vec![
            vec![CandidateAction::null(0, vec![0.0, 1.0], 0)],
            vec![CandidateAction::null(0, vec![0.0], 0)],
        ]);
        assert!(matches!(validate_candidate_set(&cs, &caps), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn eta_values() {
        let e = |b: f64| eta_of(TradeoffWeight::new(b).unwrap()).unwrap();
        assert_eq!(e(0.0), 0.0);
        assert_eq!(e(0.5), 1.0);
        assert!((e(0.8) - 4.0).abs() < 1e-12);
        assert!(matches!(eta_of(TradeoffWeight::new(1.0).unwrap()), Err(Error::EtaUndefined)));
        assert!(TradeoffWeight::new(1.5).is_err());
        assert!(TradeoffWeight::new(-0.1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn eta_strictly_increasing(a in 0.0f64..0.999, b in 0.0f64..0.999) {
            proptest::prop_assume!(a < b);
            let ea = eta_of(TradeoffWeight::new(a).unwrap()).unwrap();
            let eb = eta_of(TradeoffWeight::new(b).unwrap()).unwrap();
            proptest::prop_assert!(ea < eb);
        }
    }
}

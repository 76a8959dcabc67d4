//! The five allocation environments behind one contract: `reset`,
//! `candidates` (post-decision features plus capacities), and `step`.
//!
//! Every feature vector ends with two fairness features taken from the
//! payoff tracker: `(z_i - mean(z)) * s` and `mean(z) * s`, where `s` is the
//! environment's payoff scale (see [`EnvKind::payoff_scale`]).
//!
//! | env      | n  | horizon | K  | feature layout (before the fairness pair)                     |
//! |----------|----|---------|----|---------------------------------------------------------------|
//! | matthew  | 10 | 200     | 3  | has_target, dist, eta/40, size/0.1, x, y                       |
//! | job      | 4  | 100     | 49 | dx/3, dy/3, on_job, manhattan/6, 3 x (other dx, dy)/6, t_left  |
//! | joballoc | 4  | 100     | 1  | occupies_after, occupant_now, free_now, t_left, (z'_i - mean)*s |
//! | plant    | 5  | 200     | 8  | has_target, dx/7, dy/7, dist/14, type one-hot, needed, need/3 x3, x/7, y/7 |
//! | biaseddm | 5  | 100     | 1  | one-hot id, claim, post-decision rate                          |

mod biaseddm;
mod job;
mod joballoc;
mod matthew;
mod plant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{FairnessKind, PayoffTracker, TrackerMode};
use crate::types::{CandidateAction, CandidateSet, JointAllocation, ResourceCapacities, RewardBundle};

pub use biaseddm::BiasedDmState;
pub use job::{JobState, JOB_CORNERS};
pub use joballoc::JobAllocState;
pub use matthew::MatthewState;
pub use plant::{PlantState, PLANT_REQUIREMENTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Matthew,
    Job,
    #[serde(alias = "job_alloc")]
    JobAlloc,
    Plant,
    #[serde(alias = "biased_dm")]
    BiasedDm,
}

impl EnvKind {
    pub const ALL: [EnvKind; 5] =
        [EnvKind::Matthew, EnvKind::Job, EnvKind::JobAlloc, EnvKind::Plant, EnvKind::BiasedDm];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Matthew => "matthew",
            EnvKind::Job => "job",
            EnvKind::JobAlloc => "joballoc",
            EnvKind::Plant => "plant",
            EnvKind::BiasedDm => "biaseddm",
        }
    }

    pub fn tracker_mode(self) -> TrackerMode {
        match self {
            EnvKind::BiasedDm => TrackerMode::Rate,
            _ => TrackerMode::Additive,
        }
    }

    /// Multiplier applied to payoff-derived features.
    pub fn payoff_scale(self) -> f64 {
        match self {
            EnvKind::Matthew => 0.2,
            EnvKind::Job | EnvKind::JobAlloc => 0.04,
            EnvKind::Plant => 0.1,
            EnvKind::BiasedDm => 1.0,
        }
    }

    /// Default `(warm start, past discount)` per fairness function.
    pub fn tracker_defaults(self, fairness: FairnessKind) -> (f64, f64) {
        match fairness {
            FairnessKind::AlphaFair => (0.0, 1.0),
            FairnessKind::Ggf => (0.1, 1.0),
            FairnessKind::Variance | FairnessKind::Maximin => match self {
                EnvKind::Matthew => (5.0, 0.995),
                EnvKind::Plant => (1.0, 0.995),
                EnvKind::Job | EnvKind::JobAlloc => (3.0, 0.995),
                EnvKind::BiasedDm => (2.0, 0.999),
            },
        }
    }

    pub fn default_episodes(self) -> usize {
        match self {
            EnvKind::BiasedDm => 200,
            _ => 1000,
        }
    }

    pub fn default_validate_every(self) -> usize {
        match self {
            EnvKind::BiasedDm => 20,
            _ => 50,
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "matthew" => Ok(EnvKind::Matthew),
            "job" => Ok(EnvKind::Job),
            "joballoc" => Ok(EnvKind::JobAlloc),
            "plant" => Ok(EnvKind::Plant),
            "biaseddm" => Ok(EnvKind::BiasedDm),
            other => Err(Error::Config(format!("unknown environment '{other}'"))),
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Tunable environment constants. Omitted keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    /// Overrides the per-environment horizon when set.
    pub horizon: Option<usize>,
    pub matthew_normal_size: f64,
    pub matthew_advantaged_size: f64,
    pub matthew_n_advantaged: usize,
    pub matthew_speed_factor: f64,
    pub matthew_growth: f64,
    pub matthew_size_cap: f64,
    pub matthew_n_resources: usize,
    pub job_grid: usize,
    /// Per-step shaping penalty weight on distance to the job (training only).
    pub job_shaping_weight: f64,
    pub plant_grid: usize,
    pub biaseddm_utility_step: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            horizon: None,
            matthew_normal_size: 0.01,
            matthew_advantaged_size: 0.03,
            matthew_n_advantaged: 4,
            matthew_speed_factor: 2.5,
            matthew_growth: 0.005,
            matthew_size_cap: 0.10,
            matthew_n_resources: 3,
            job_grid: 7,
            job_shaping_weight: 0.01,
            plant_grid: 8,
            biaseddm_utility_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub n_agents: usize,
    pub horizon: usize,
    pub feature_dim: usize,
    /// Resource types per step.
    pub k: usize,
    pub params: EnvParams,
    /// Adds training-only shaping rewards to utility (Job).
    pub shaping: bool,
}

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        Self::with_params(kind, EnvParams::default())
    }

    pub fn with_params(kind: EnvKind, params: EnvParams) -> Self {
        let (n_agents, horizon, local_dim, k) = match kind {
            EnvKind::Matthew => (10, 200, matthew::LOCAL_DIM, params.matthew_n_resources),
            EnvKind::Job => (4, 100, job::LOCAL_DIM, params.job_grid * params.job_grid),
            EnvKind::JobAlloc => (4, 100, joballoc::LOCAL_DIM, 1),
            EnvKind::Plant => (5, 200, plant::LOCAL_DIM, plant::N_RESOURCES),
            EnvKind::BiasedDm => (5, 100, biaseddm::LOCAL_DIM, 1),
        };
        Self {
            kind,
            n_agents,
            horizon: params.horizon.unwrap_or(horizon),
            feature_dim: local_dim + FAIRNESS_FEATURES,
            k,
            params,
            shaping: false,
        }
    }

    pub fn with_shaping(mut self, shaping: bool) -> Self {
        self.shaping = shaping;
        self
    }
}

pub const FAIRNESS_FEATURES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum World {
    Matthew(MatthewState),
    Job(JobState),
    JobAlloc(JobAllocState),
    Plant(PlantState),
    BiasedDm(BiasedDmState),
}

/// Full mutable environment state: world, step counter, RNG stream, accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub world: World,
    pub step: usize,
    pub rng: ChaCha8Rng,
    /// Sum of every utility reward emitted this episode (including shaping).
    pub utility_total: f64,
    /// Sum of unshaped task utility.
    pub task_utility_total: f64,
    /// Undiscounted sum of payoff deltas per agent.
    pub payoff_totals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// `fair` is left zeroed; the learner fills it from the payoff tracker.
    pub rewards: RewardBundle,
    /// Utility without any training-only shaping.
    pub task_utility: Vec<f64>,
    pub done: bool,
}

/// What a candidate does, independent of its features.
pub(crate) struct ActionTable<A> {
    pub actions: Vec<Vec<(A, Vec<f64>, bool)>>,
    pub caps: Vec<f64>,
}

impl<A> ActionTable<A> {
    pub fn check(&self, alloc: &JointAllocation) -> Result<()> {
        if alloc.chosen.len() != self.actions.len() {
            return Err(Error::Infeasible(format!(
                "{} actions for {} agents",
                alloc.chosen.len(),
                self.actions.len()
            )));
        }
        let mut usage = vec![0.0; self.caps.len()];
        for (i, (&j, list)) in alloc.chosen.iter().zip(&self.actions).enumerate() {
            let (_, cons, _) = list
                .get(j)
                .ok_or_else(|| Error::Infeasible(format!("agent {i}: no candidate {j}")))?;
            for (u, c) in usage.iter_mut().zip(cons) {
                *u += c;
            }
        }
        if let Some(k) = usage.iter().zip(&self.caps).position(|(u, c)| u > c) {
            return Err(Error::Infeasible(format!("resource {k} over capacity")));
        }
        Ok(())
    }

    pub fn into_candidates(
        self,
        mut features: impl FnMut(usize, &A) -> Vec<f64>,
    ) -> (CandidateSet, ResourceCapacities) {
        let per_agent = self
            .actions
            .into_iter()
            .enumerate()
            .map(|(i, list)| {
                list.into_iter()
                    .enumerate()
                    .map(|(j, (a, cons, is_null))| CandidateAction {
                        action_id: j,
                        features: features(i, &a),
                        consumption: cons,
                        is_null,
                    })
                    .collect()
            })
            .collect();
        (CandidateSet::new(per_agent), ResourceCapacities(self.caps))
    }
}

pub(crate) fn one_hot(k: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[i] = 1.0;
    v
}

/// Appends the two fairness features for agent `i`.
pub(crate) fn push_fairness(f: &mut Vec<f64>, tracker: &PayoffTracker, i: usize, scale: f64) {
    let m = tracker.mean();
    f.push((tracker.z[i] - m) * scale);
    f.push(m * scale);
}

#[derive(Debug, Clone)]
pub struct Env {
    pub spec: EnvSpec,
    pub state: EnvState,
}

impl Env {
    /// Seed-deterministic initial state.
    pub fn reset(spec: &EnvSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = &spec.params;
        let world = match spec.kind {
            EnvKind::Matthew => World::Matthew(MatthewState::reset(p, spec.n_agents, &mut rng)),
            EnvKind::Job => World::Job(JobState::reset(p)),
            EnvKind::JobAlloc => World::JobAlloc(JobAllocState::reset()),
            EnvKind::Plant => World::Plant(PlantState::reset(p, spec.n_agents, &mut rng)),
            EnvKind::BiasedDm => World::BiasedDm(BiasedDmState::reset(spec.n_agents)),
        };
        Self {
            spec: spec.clone(),
            state: EnvState {
                world,
                step: 0,
                rng,
                utility_total: 0.0,
                task_utility_total: 0.0,
                payoff_totals: vec![0.0; spec.n_agents],
            },
        }
    }

    pub fn n_agents(&self) -> usize {
        self.spec.n_agents
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.spec.horizon
    }

    /// Fraction of the episode still ahead.
    pub fn time_left(&self) -> f64 {
        1.0 - self.state.step as f64 / self.spec.horizon.max(1) as f64
    }

    pub fn candidates(&self, tracker: &PayoffTracker) -> (CandidateSet, ResourceCapacities) {
        let ctx = FeatureCtx {
            tracker,
            scale: self.spec.kind.payoff_scale(),
            time_left: self.time_left(),
        };
        let p = &self.spec.params;
        match &self.state.world {
            World::Matthew(s) => s.candidates(p, &ctx),
            World::Job(s) => s.candidates(p, &ctx),
            World::JobAlloc(s) => s.candidates(&ctx),
            World::Plant(s) => s.candidates(p, &ctx),
            World::BiasedDm(s) => s.candidates(&ctx),
        }
    }

    /// Applies a joint allocation. Infeasible allocations are a hard error.
    pub fn step(&mut self, alloc: &JointAllocation) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::InvalidValue("step called on a finished episode".into()));
        }
        let p = &self.spec.params;
        let st = &mut self.state;
        let (task, payoff) = match &mut st.world {
            World::Matthew(s) => s.step(p, alloc, &mut st.rng)?,
            World::Job(s) => s.step(p, alloc)?,
            World::JobAlloc(s) => s.step(alloc)?,
            World::Plant(s) => s.step(p, alloc, &mut st.rng)?,
            World::BiasedDm(s) => s.step(p, alloc)?,
        };
        let mut utility = task.clone();
        if self.spec.shaping {
            if let World::Job(s) = &st.world {
                for (u, pen) in utility.iter_mut().zip(s.shaping_penalties(p)) {
                    *u += pen;
                }
            }
        }
        st.step += 1;
        for i in 0..utility.len() {
            st.utility_total += utility[i];
            st.task_utility_total += task[i];
            st.payoff_totals[i] += payoff[i];
        }
        let n = utility.len();
        Ok(StepOutcome {
            rewards: RewardBundle::new(utility, vec![0.0; n], payoff)?,
            task_utility: task,
            done: st.step >= self.spec.horizon,
        })
    }

    /// Undiscounted payoff vector for reporting: totals, or rates for BiasedDM.
    pub fn payoff_vector(&self) -> Vec<f64> {
        match self.spec.kind.tracker_mode() {
            TrackerMode::Additive => self.state.payoff_totals.clone(),
            TrackerMode::Rate => {
                let t = self.state.step.max(1) as f64;
                self.state.payoff_totals.iter().map(|c| c / t).collect()
            }
        }
    }
}

pub(crate) struct FeatureCtx<'a> {
    pub tracker: &'a PayoffTracker,
    pub scale: f64,
    pub time_left: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::{solve, AllocationProblem};
    use crate::fairness::init_tracker;
    use crate::types::validate_candidate_set;
    use rand::Rng;

    fn tracker_for(spec: &EnvSpec, seed: u64) -> PayoffTracker {
        let (w, g) = spec.kind.tracker_defaults(FairnessKind::Variance);
        init_tracker(spec.kind.tracker_mode(), spec.n_agents, w, g, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
    }

    /// Random-value allocation rollout; returns (candidates, allocation) per step.
    fn rollout(spec: &EnvSpec, seed: u64) -> Vec<JointAllocation> {
        let mut env = Env::reset(spec, seed);
        let mut tracker = tracker_for(spec, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let mut out = Vec::new();
        while !env.is_done() {
            let (cs, caps) = env.candidates(&tracker);
            let values: Vec<Vec<f64>> =
                cs.per_agent.iter().map(|l| l.iter().map(|_| rng.gen::<f64>()).collect()).collect();
            let a = solve(&AllocationProblem::new(&values, &cs, &caps)).unwrap().allocation;
            let o = env.step(&a).unwrap();
            tracker.update(&o.rewards.payoff_delta);
            out.push(a);
        }
        out
    }

    #[test]
    fn feature_dims_and_validity() {
        for kind in EnvKind::ALL {
            let spec = EnvSpec::new(kind);
            let env = Env::reset(&spec, 1);
            let (cs, caps) = env.candidates(&tracker_for(&spec, 1));
            validate_candidate_set(&cs, &caps).unwrap();
            assert_eq!(cs.n_agents(), spec.n_agents);
            assert_eq!(cs.feature_dim(), Some(spec.feature_dim), "{kind}");
            assert_eq!(caps.len(), spec.k);
        }
    }

    #[test]
    fn reset_is_deterministic() {
        for kind in EnvKind::ALL {
            let spec = EnvSpec::new(kind);
            assert_eq!(Env::reset(&spec, 7).state, Env::reset(&spec, 7).state);
        }
    }

    #[test]
    fn horizon_and_replay_determinism() {
        for kind in EnvKind::ALL {
            let spec = EnvSpec::new(kind);
            let allocs = rollout(&spec, 3);
            assert_eq!(allocs.len(), spec.horizon);
            // Replaying the same allocations from the same seed is bit-exact.
            let mut a = Env::reset(&spec, 3);
            let mut b = Env::reset(&spec, 3);
            for al in &allocs {
                let oa = a.step(al).unwrap();
                let ob = b.step(al).unwrap();
                assert_eq!(oa, ob);
                assert_eq!(a.state, b.state);
            }
            assert!(a.step(&allocs[0]).is_err());
        }
    }

    #[test]
    fn infeasible_allocations_rejected() {
        let spec = EnvSpec::new(EnvKind::BiasedDm);
        let mut env = Env::reset(&spec, 0);
        assert!(matches!(
            env.step(&JointAllocation::new(vec![1, 1, 0, 0, 0])),
            Err(Error::Infeasible(_))
        ));
        assert!(env.step(&JointAllocation::new(vec![0, 0])).is_err());
        assert!(env.step(&JointAllocation::new(vec![0, 0, 0, 0, 9])).is_err());
        assert_eq!(env.state.step, 0);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("BiasedDM".parse::<EnvKind>().unwrap(), EnvKind::BiasedDm);
        assert_eq!("job-alloc".parse::<EnvKind>().unwrap(), EnvKind::JobAlloc);
        assert!("nope".parse::<EnvKind>().is_err());
    }
}

//! Double Q-learning over the score-then-allocate loop.
//!
//! Three ways to combine utility and fairness:
//! * `Jo`: one net `Q` regressed on the blended reward `(1-b) r_u + b r_f`.
//! * `So`: separate `U` and `F` nets, blended only when scoring candidates.
//! * `Fo`: like `So`, but `U` is a frozen, previously trained net.

mod buffer;
mod train;

pub use buffer::{ReplayBuffer, StoredCandidates, Transition};
pub use train::{
    default_run_id, evaluate_policy, fairness_objective, run_episode, run_training, train_with_frozen,
    EpisodeStats, EvalRow, EvalSummary, Learning, TrainLogRow, TrainRunResult, TrainedPolicy,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{solve, AllocationProblem};
use crate::error::{Error, Result};
use crate::fairness::{decompose_reward, FairnessSpec};
use crate::types::{CandidateSet, JointAllocation, ResourceCapacities, TradeoffWeight};
use crate::valuenet::{sync_target, ValueNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Jo,
    So,
    Fo,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Jo => "jo",
            Mode::So => "so",
            Mode::Fo => "fo",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jo" => Ok(Mode::Jo),
            "so" => Ok(Mode::So),
            "fo" => Ok(Mode::Fo),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fairness function plus the payoff tracker's warm start and past discount.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessSetup {
    pub spec: FairnessSpec,
    pub warm_w: f64,
    pub gamma_p: f64,
}

/// Payoffs below this are lifted before alpha-fair rewards are computed, so
/// an unwarmed tracker starting at zero still yields finite rewards.
pub const ALPHA_FAIR_FLOOR: f64 = 1e-3;

impl FairnessSetup {
    /// Per-agent fairness rewards for the payoff change `z -> z_next`.
    pub fn rewards(&self, z: &[f64], z_next: &[f64]) -> Result<Vec<f64>> {
        match self.spec {
            FairnessSpec::AlphaFair { .. } => {
                let lift = |v: &[f64]| v.iter().map(|x| x.max(ALPHA_FAIR_FLOOR)).collect::<Vec<_>>();
                decompose_reward(&self.spec, &lift(z), &lift(z_next))
            }
            _ => decompose_reward(&self.spec, z, z_next),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub mode: Mode,
    pub beta: TradeoffWeight,
    pub gamma: f64,
    pub lr: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub learn_every: usize,
    /// Target nets are synced every this many episodes.
    pub target_sync: usize,
    pub validate_every: usize,
    pub n_episodes: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Greedy episodes in the final evaluation.
    pub n_eval: usize,
    pub hidden_dims: Vec<usize>,
    pub fairness: FairnessSetup,
    pub frozen_utility_checkpoint: Option<std::path::PathBuf>,
}

impl LearnerConfig {
    /// Defaults for `env`, with the fairness function's tracker table applied.
    pub fn defaults(env: crate::envs::EnvKind, n_agents: usize, mode: Mode, beta: TradeoffWeight) -> Self {
        let kind = crate::fairness::FairnessKind::Variance;
        let (warm_w, gamma_p) = env.tracker_defaults(kind);
        Self {
            mode,
            beta,
            gamma: 0.95,
            lr: crate::valuenet::DEFAULT_LR,
            buffer_capacity: 250_000,
            batch_size: 32,
            learn_every: 4,
            target_sync: 10,
            validate_every: env.default_validate_every(),
            n_episodes: env.default_episodes(),
            eps_start: 1.0,
            eps_end: 0.05,
            n_eval: 50,
            hidden_dims: vec![20, 20],
            fairness: FairnessSetup {
                spec: FairnessSpec::canonical(kind, n_agents, 1.0),
                warm_w,
                gamma_p,
            },
            frozen_utility_checkpoint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 || self.learn_every == 0 {
            return bad("buffer_capacity, batch_size and learn_every must be positive");
        }
        if self.target_sync == 0 || self.validate_every == 0 || self.n_episodes == 0 {
            return bad("target_sync, validate_every and n_episodes must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return bad("epsilon bounds must lie in [0, 1]");
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }
}

/// Linear decay from `start` to `end` over the first half of training.
pub fn epsilon_at(episode: usize, n_episodes: usize, start: f64, end: f64) -> f64 {
    let horizon = n_episodes as f64 / 2.0;
    if horizon <= 0.0 || episode as f64 >= horizon {
        return end;
    }
    start + (end - start) * (episode as f64 / horizon)
}

/// The online estimators of one training run.
#[derive(Debug, Clone, PartialEq)]
pub enum Nets {
    Jo { q: ValueNet },
    So { u: ValueNet, f: ValueNet },
    Fo { u_frozen: ValueNet, f: ValueNet },
}

impl Nets {
    pub fn mode(&self) -> Mode {
        match self {
            Nets::Jo { .. } => Mode::Jo,
            Nets::So { .. } => Mode::So,
            Nets::Fo { .. } => Mode::Fo,
        }
    }

    /// Nets that receive gradient updates.
    pub fn trainable(&self) -> Vec<&ValueNet> {
        match self {
            Nets::Jo { q } => vec![q],
            Nets::So { u, f } => vec![u, f],
            Nets::Fo { f, .. } => vec![f],
        }
    }

    fn trainable_mut(&mut self) -> Vec<&mut ValueNet> {
        match self {
            Nets::Jo { q } => vec![q],
            Nets::So { u, f } => vec![u, f],
            Nets::Fo { f, .. } => vec![f],
        }
    }

    /// Copies every trainable net into the matching slot of `target`.
    pub fn sync_into(&self, target: &mut Nets) -> Result<()> {
        if self.mode() != target.mode() {
            return Err(Error::Config("target nets belong to another mode".into()));
        }
        for (o, t) in self.trainable().into_iter().zip(target.trainable_mut()) {
            sync_target(o, t)?;
        }
        Ok(())
    }

    /// Blended score of one candidate's features.
    pub fn score(&self, x: &[f64], beta: f64) -> Result<f64> {
        match self {
            Nets::Jo { q } => q.forward(x),
            Nets::So { u, f } => Ok(blend(u.forward(x)?, f.forward(x)?, beta)),
            Nets::Fo { u_frozen, f } => Ok(blend(u_frozen.forward(x)?, f.forward(x)?, beta)),
        }
    }
}

fn blend(u: f64, f: f64, beta: f64) -> f64 {
    (1.0 - beta) * u + beta * f
}

/// Per-agent candidate values under the mode's scoring rule.
pub fn score_candidates(nets: &Nets, cs: &CandidateSet, beta: f64) -> Result<Vec<Vec<f64>>> {
    cs.per_agent
        .iter()
        .map(|list| list.iter().map(|c| nets.score(&c.features, beta)).collect())
        .collect()
}

/// Epsilon-greedy joint action: with probability `epsilon` the allocator runs
/// on i.i.d. uniform random values, otherwise on the learned scores.
pub fn select_joint_action<R: Rng + ?Sized>(
    nets: &Nets,
    cs: &CandidateSet,
    caps: &ResourceCapacities,
    beta: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<JointAllocation> {
    let values = if rng.gen::<f64>() < epsilon {
        cs.per_agent.iter().map(|l| l.iter().map(|_| rng.gen::<f64>()).collect()).collect()
    } else {
        score_candidates(nets, cs, beta)?
    };
    Ok(solve(&AllocationProblem::new(&values, cs, caps))?.allocation)
}

/// Greedy successor allocation under `score`, or `None` at episode end.
fn successor_choice(
    score: impl Fn(&[f64]) -> Result<f64>,
    t: &Transition,
) -> Result<Option<(CandidateSet, JointAllocation)>> {
    if t.done {
        return Ok(None);
    }
    let cs = t.successor.to_candidate_set();
    let caps = ResourceCapacities(t.successor.capacities.clone());
    let values = cs
        .per_agent
        .iter()
        .map(|l| l.iter().map(|c| score(&c.features)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let a = solve(&AllocationProblem::new(&values, &cs, &caps))?.allocation;
    Ok(Some((cs, a)))
}

/// Per-agent TD targets `r + gamma * target_net(o', A*)`.
fn td_targets(
    rewards: &[f64],
    next: &Option<(CandidateSet, JointAllocation)>,
    target: &ValueNet,
    gamma: f64,
) -> Result<Vec<f64>> {
    let mut out = rewards.to_vec();
    if let Some((cs, a)) = next {
        if gamma != 0.0 {
            for (i, feats) in cs.chosen_features(a).iter().enumerate() {
                out[i] += gamma * target.forward(feats)?;
            }
        }
    }
    Ok(out)
}

fn blended_rewards(t: &Transition, beta: f64) -> Vec<f64> {
    t.rewards
        .utility
        .iter()
        .zip(&t.rewards.fair)
        .map(|(u, f)| (1.0 - beta) * u + beta * f)
        .collect()
}

/// JO regression targets of one transition: blended reward plus the target
/// net's value of the online-greedy successor action.
pub fn jo_targets(q: &ValueNet, q_target: &ValueNet, t: &Transition, beta: f64, gamma: f64) -> Result<Vec<f64>> {
    let next = successor_choice(|x| q.forward(x), t)?;
    td_targets(&blended_rewards(t, beta), &next, q_target, gamma)
}

/// SO/FO regression targets of one transition. The successor action is
/// chosen once by `scorer`; U targets are skipped when `u_target` is `None`.
pub fn split_targets(
    scorer: &Nets,
    u_target: Option<&ValueNet>,
    f_target: &ValueNet,
    t: &Transition,
    beta: f64,
    gamma: f64,
) -> Result<(Option<Vec<f64>>, Vec<f64>)> {
    let next = successor_choice(|x| scorer.score(x, beta), t)?;
    let u = match u_target {
        Some(ut) => Some(td_targets(&t.rewards.utility, &next, ut, gamma)?),
        None => None,
    };
    Ok((u, td_targets(&t.rewards.fair, &next, f_target, gamma)?))
}

/// One JO update. Returns the pre-update batch loss, or `None` for an empty buffer.
pub fn update_jo<R: Rng + ?Sized>(
    q: &mut ValueNet,
    q_target: &ValueNet,
    buffer: &ReplayBuffer<Transition>,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<Option<f64>> {
    if buffer.is_empty() {
        return Ok(None);
    }
    let beta = cfg.beta.value();
    let mut pairs = Vec::new();
    for t in buffer.sample(cfg.batch_size, rng) {
        let targets = jo_targets(q, q_target, t, beta, cfg.gamma)?;
        pairs.extend(t.chosen_features.iter().cloned().zip(targets));
    }
    Ok(Some(q.train_step(&pairs)?))
}

/// Shared body of the SO and FO updates.
fn update_split<R: Rng + ?Sized>(
    scorer: &Nets,
    u: Option<(&mut ValueNet, &ValueNet)>,
    f: (&mut ValueNet, &ValueNet),
    buffer: &ReplayBuffer<Transition>,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<(Option<f64>, f64)> {
    let beta = cfg.beta.value();
    let mut pairs_u = Vec::new();
    let mut pairs_f = Vec::new();
    for t in buffer.sample(cfg.batch_size, rng) {
        let (tu, tf) = split_targets(scorer, u.as_ref().map(|x| x.1), f.1, t, beta, cfg.gamma)?;
        if let Some(tu) = tu {
            pairs_u.extend(t.chosen_features.iter().cloned().zip(tu));
        }
        pairs_f.extend(t.chosen_features.iter().cloned().zip(tf));
    }
    let loss_u = match u {
        Some((u_net, _)) => Some(u_net.train_step(&pairs_u)?),
        None => None,
    };
    let loss_f = f.0.train_step(&pairs_f)?;
    Ok((loss_u, loss_f))
}

/// One SO update. Returns `(loss_u, loss_f)`, or `None` for an empty buffer.
pub fn update_so<R: Rng + ?Sized>(
    u: &mut ValueNet,
    f: &mut ValueNet,
    u_target: &ValueNet,
    f_target: &ValueNet,
    buffer: &ReplayBuffer<Transition>,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<Option<(f64, f64)>> {
    if buffer.is_empty() {
        return Ok(None);
    }
    let scorer = Nets::So { u: u.clone(), f: f.clone() };
    let (lu, lf) = update_split(&scorer, Some((u, u_target)), (f, f_target), buffer, cfg, rng)?;
    Ok(Some((lu.unwrap_or(0.0), lf)))
}

/// One FO update: only `F` learns; `u_frozen` is read, never written.
pub fn update_fo<R: Rng + ?Sized>(
    f: &mut ValueNet,
    f_target: &ValueNet,
    u_frozen: &ValueNet,
    buffer: &ReplayBuffer<Transition>,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<Option<f64>> {
    if buffer.is_empty() {
        return Ok(None);
    }
    let scorer = Nets::Fo { u_frozen: u_frozen.clone(), f: f.clone() };
    let (_, lf) = update_split(&scorer, None, (f, f_target), buffer, cfg, rng)?;
    Ok(Some(lf))
}

/// Runs the mode's update on `online`; returns the mean loss over trained nets.
pub fn update<R: Rng + ?Sized>(
    online: &mut Nets,
    target: &Nets,
    buffer: &ReplayBuffer<Transition>,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<Option<f64>> {
    match (online, target) {
        (Nets::Jo { q }, Nets::Jo { q: qt }) => update_jo(q, qt, buffer, cfg, rng),
        (Nets::So { u, f }, Nets::So { u: ut, f: ft }) => {
            Ok(update_so(u, f, ut, ft, buffer, cfg, rng)?.map(|(a, b)| (a + b) / 2.0))
        }
        (Nets::Fo { u_frozen, f }, Nets::Fo { f: ft, .. }) => update_fo(f, ft, u_frozen, buffer, cfg, rng),
        _ => Err(Error::Config("online and target nets belong to different modes".into())),
    }
}

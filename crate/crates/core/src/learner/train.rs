//! Episode rollouts, the training driver and greedy evaluation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{epsilon_at, select_joint_action, update, LearnerConfig, Mode, Nets, ReplayBuffer, Transition, ALPHA_FAIR_FLOOR};
use crate::envs::{Env, EnvSpec};
use crate::error::{Error, Result};
use crate::fairness::{evaluate_metrics, fairness_value, init_tracker, FairnessSpec, PayoffTracker};
use crate::types::Experience;
use crate::valuenet::{load_checkpoint, NetConfig, NetRole, ValueNet};

// Stream ids keep the RNG consumers of one run independent of each other.
const STREAM_INIT: u64 = 1;
const STREAM_EXPLORE: u64 = 2;
const STREAM_SAMPLE: u64 = 3;
const STREAM_EPISODES: u64 = 4;
const STREAM_VALIDATION: u64 = 5;
const STREAM_EVAL: u64 = 6;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Environment seed and tracker RNG for the `index`-th episode of a stream.
fn episode_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut r = stream_rng(seed, stream);
    r.set_word_pos(u128::from(index) * 16);
    r.gen()
}

/// `F(z)` with alpha-fair payoffs lifted to a small positive floor.
pub fn fairness_objective(spec: &FairnessSpec, z: &[f64]) -> Result<f64> {
    match spec {
        FairnessSpec::AlphaFair { .. } => {
            let lifted: Vec<f64> = z.iter().map(|x| x.max(ALPHA_FAIR_FLOOR)).collect();
            fairness_value(spec, &lifted)
        }
        _ => fairness_value(spec, z),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    /// Task utility, without shaping.
    pub utility: f64,
    /// Utility as seen by the learner, including any shaping.
    pub shaped_utility: f64,
    /// Fairness of the undiscounted payoff vector.
    pub fairness: f64,
    pub payoff: Vec<f64>,
    /// Final state of the (warm-started, discounted) payoff tracker.
    pub tracker: PayoffTracker,
    /// Mean loss of the updates run during the episode.
    pub mean_loss: Option<f64>,
}

/// Mutable pieces of a training loop shared across episodes.
pub struct Learning<'a> {
    pub target: &'a Nets,
    pub buffer: &'a mut ReplayBuffer<Transition>,
    pub sample_rng: &'a mut ChaCha8Rng,
    /// Environment steps taken so far in the run; updates fire every `learn_every`.
    pub global_step: &'a mut usize,
}

/// Rolls one full episode. With `learning`, every step is stored and the
/// mode's update runs every `learn_every` steps; without it the nets are only
/// read.
pub fn run_episode(
    nets: &mut Nets,
    env: &mut Env,
    mut tracker: PayoffTracker,
    epsilon: f64,
    beta: f64,
    cfg: &LearnerConfig,
    explore_rng: &mut ChaCha8Rng,
    mut learning: Option<Learning<'_>>,
) -> Result<EpisodeStats> {
    let mut losses = Vec::new();
    let (mut cs, mut caps) = env.candidates(&tracker);
    let mut shaped = 0.0;
    while !env.is_done() {
        let alloc = select_joint_action(nets, &cs, &caps, beta, epsilon, explore_rng)?;
        let chosen_features = cs.chosen_features(&alloc);
        let mut outcome = env.step(&alloc)?;
        let delta = &outcome.rewards.payoff_delta;
        let z_next = tracker.peek(delta);
        outcome.rewards.fair = cfg.fairness.rewards(&tracker.z, &z_next)?;
        tracker.update(delta);
        shaped += outcome.rewards.utility.iter().sum::<f64>();
        let (next_cs, next_caps) = env.candidates(&tracker);
        if let Some(l) = learning.as_mut() {
            l.buffer.push(Transition::from(Experience {
                chosen_features,
                rewards: outcome.rewards,
                successor_candidates: next_cs.clone(),
                successor_capacities: next_caps.clone(),
                done: outcome.done,
            }));
            *l.global_step += 1;
            if *l.global_step % cfg.learn_every == 0 {
                if let Some(loss) = update(nets, l.target, l.buffer, cfg, l.sample_rng)? {
                    losses.push(loss);
                }
            }
        }
        cs = next_cs;
        caps = next_caps;
    }
    let payoff = env.payoff_vector();
    Ok(EpisodeStats {
        utility: env.state.task_utility_total,
        shaped_utility: shaped,
        fairness: fairness_objective(&cfg.fairness.spec, &payoff)?,
        payoff,
        tracker,
        mean_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
    })
}

fn fresh_tracker(spec: &EnvSpec, cfg: &LearnerConfig, episode_seed: u64) -> Result<PayoffTracker> {
    init_tracker(
        spec.kind.tracker_mode(),
        spec.n_agents,
        cfg.fairness.warm_w,
        cfg.fairness.gamma_p,
        &mut stream_rng(episode_seed, STREAM_INIT),
    )
}

/// Nets plus the trade-off weight they were trained at.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    pub nets: Nets,
    pub beta_train: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_episodes: usize,
    pub utility_mean: f64,
    pub utility_std: f64,
    /// Mean of the negative payoff variance.
    pub variance_mean: f64,
    pub variance_std: f64,
    /// `None` if any episode ended with a non-positive payoff.
    pub alphafair_mean: Option<f64>,
    pub ggf_mean: f64,
    pub maximin_mean: f64,
    pub utilities: Vec<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// `n_eval` greedy episodes at `beta_test`, without shaping.
pub fn evaluate_policy(
    policy: &TrainedPolicy,
    env_spec: &EnvSpec,
    cfg: &LearnerConfig,
    beta_test: f64,
    n_eval: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if policy.nets.mode() == Mode::Jo && beta_test != policy.beta_train {
        return Err(Error::Config(format!(
            "a jo model trained at beta {} cannot be evaluated at beta {beta_test}",
            policy.beta_train
        )));
    }
    if !(0.0..=1.0).contains(&beta_test) {
        return Err(Error::InvalidValue(format!("beta_test {beta_test} outside [0, 1]")));
    }
    if n_eval == 0 {
        return Err(Error::InvalidValue("n_eval must be positive".into()));
    }
    let spec = env_spec.clone().with_shaping(false);
    let mut nets = policy.nets.clone();
    let mut explore = stream_rng(seed, STREAM_EXPLORE);
    let mut utilities = Vec::with_capacity(n_eval);
    let mut variances = Vec::with_capacity(n_eval);
    let mut alpha = Some(0.0);
    let (mut ggf, mut maximin) = (0.0, 0.0);
    for e in 0..n_eval {
        let es = episode_seed(seed, STREAM_EVAL, e as u64);
        let mut env = Env::reset(&spec, es);
        let tracker = fresh_tracker(&spec, cfg, es)?;
        let stats = run_episode(&mut nets, &mut env, tracker, 0.0, beta_test, cfg, &mut explore, None)?;
        let m = evaluate_metrics(&stats.payoff);
        utilities.push(stats.utility);
        variances.push(m.variance);
        alpha = alpha.zip(m.alpha_fair).map(|(a, b)| a + b);
        ggf += m.ggf;
        maximin += m.maximin;
    }
    let n = n_eval as f64;
    let (utility_mean, utility_std) = mean_std(&utilities);
    let (variance_mean, variance_std) = mean_std(&variances);
    Ok(EvalSummary {
        n_episodes: n_eval,
        utility_mean,
        utility_std,
        variance_mean,
        variance_std,
        alphafair_mean: alpha.map(|a| a / n),
        ggf_mean: ggf / n,
        maximin_mean: maximin / n,
        utilities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub run_id: String,
    pub episode: usize,
    pub epsilon: f64,
    pub mean_loss: Option<f64>,
    pub episode_utility: f64,
    pub episode_fairness: f64,
    pub wall_ms: u64,
}

/// One line of an evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub run_id: String,
    pub env: String,
    pub mode: String,
    pub fairness_kind: String,
    pub beta_train: f64,
    pub beta_test: f64,
    pub seed: u64,
    pub utility_mean: f64,
    pub utility_std: f64,
    pub variance_mean: f64,
    pub alphafair_mean: Option<f64>,
    pub ggf_mean: f64,
    pub maximin_mean: f64,
}

impl EvalRow {
    pub fn new(run_id: &str, env_spec: &EnvSpec, cfg: &LearnerConfig, beta_train: f64, beta_test: f64, seed: u64, s: &EvalSummary) -> Self {
        Self {
            run_id: run_id.to_string(),
            env: env_spec.kind.name().to_string(),
            mode: cfg.mode.name().to_string(),
            fairness_kind: cfg.fairness.spec.kind().name().to_string(),
            beta_train,
            beta_test,
            seed,
            utility_mean: s.utility_mean,
            utility_std: s.utility_std,
            variance_mean: s.variance_mean,
            alphafair_mean: s.alphafair_mean,
            ggf_mean: s.ggf_mean,
            maximin_mean: s.maximin_mean,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainRunResult {
    pub run_id: String,
    /// Nets with the highest validation objective.
    pub best: TrainedPolicy,
    pub best_episode: usize,
    pub best_objective: f64,
    /// `(episode, objective)` for every validation episode, in order.
    pub validation: Vec<(usize, f64)>,
    pub log: Vec<TrainLogRow>,
    pub eval: EvalSummary,
    pub eval_row: EvalRow,
}

pub fn default_run_id(env_spec: &EnvSpec, cfg: &LearnerConfig, seed: u64) -> String {
    format!(
        "{}-{}-{}-b{}-s{seed}",
        env_spec.kind.name(),
        cfg.mode.name(),
        cfg.fairness.spec.kind().name(),
        cfg.beta.value()
    )
}

/// Full training run. FO loads its frozen utility net from
/// `cfg.frozen_utility_checkpoint`.
pub fn run_training(env_spec: &EnvSpec, cfg: &LearnerConfig, seed: u64) -> Result<TrainRunResult> {
    let frozen = match (cfg.mode, &cfg.frozen_utility_checkpoint) {
        (Mode::Fo, Some(path)) => Some(load_checkpoint(&std::fs::read(path)?)?.0),
        (Mode::Fo, None) => {
            return Err(Error::Config("fo mode requires frozen_utility_checkpoint".into()));
        }
        _ => None,
    };
    train_with_frozen(env_spec, cfg, seed, frozen)
}

/// [`run_training`] with the frozen utility net supplied directly.
pub fn train_with_frozen(
    env_spec: &EnvSpec,
    cfg: &LearnerConfig,
    seed: u64,
    frozen: Option<ValueNet>,
) -> Result<TrainRunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let beta = cfg.beta.value();
    let net_cfg = NetConfig::new(env_spec.feature_dim, cfg.hidden_dims.clone());
    let mut init = stream_rng(seed, STREAM_INIT);
    let mut make = |role| {
        let mut n = ValueNet::new(net_cfg.clone(), role, &mut init);
        n.set_learning_rate(cfg.lr);
        n
    };
    let mut nets = match cfg.mode {
        Mode::Jo => Nets::Jo { q: make(NetRole::Q) },
        Mode::So => Nets::So { u: make(NetRole::U), f: make(NetRole::F) },
        Mode::Fo => {
            let u = frozen.ok_or_else(|| Error::Config("fo mode requires a frozen utility net".into()))?;
            if u.config() != &net_cfg {
                return Err(Error::DimensionMismatch(format!(
                    "frozen net {:?} does not match {:?}",
                    u.config(),
                    net_cfg
                )));
            }
            Nets::Fo { u_frozen: u, f: make(NetRole::F) }
        }
    };
    let mut target = nets.clone();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut explore = stream_rng(seed, STREAM_EXPLORE);
    let mut sample_rng = stream_rng(seed, STREAM_SAMPLE);
    let mut global_step = 0usize;
    let run_id = default_run_id(env_spec, cfg, seed);
    let eval_spec = env_spec.clone().with_shaping(false);

    let mut log = Vec::with_capacity(cfg.n_episodes);
    let mut validation = Vec::new();
    let mut best: Option<(Nets, usize, f64)> = None;
    for ep in 0..cfg.n_episodes {
        let eps = epsilon_at(ep, cfg.n_episodes, cfg.eps_start, cfg.eps_end);
        let es = episode_seed(seed, STREAM_EPISODES, ep as u64);
        let mut env = Env::reset(env_spec, es);
        let tracker = fresh_tracker(env_spec, cfg, es)?;
        let learning = Learning {
            target: &target,
            buffer: &mut buffer,
            sample_rng: &mut sample_rng,
            global_step: &mut global_step,
        };
        let stats = run_episode(&mut nets, &mut env, tracker, eps, beta, cfg, &mut explore, Some(learning))?;
        log.push(TrainLogRow {
            run_id: run_id.clone(),
            episode: ep,
            epsilon: eps,
            mean_loss: stats.mean_loss,
            episode_utility: stats.utility,
            episode_fairness: stats.fairness,
            wall_ms: start.elapsed().as_millis() as u64,
        });
        if (ep + 1) % cfg.target_sync == 0 {
            nets.sync_into(&mut target)?;
        }
        if (ep + 1) % cfg.validate_every == 0 || ep + 1 == cfg.n_episodes {
            let vs = episode_seed(seed, STREAM_VALIDATION, validation.len() as u64);
            let mut env = Env::reset(&eval_spec, vs);
            let tracker = fresh_tracker(&eval_spec, cfg, vs)?;
            let mut probe = nets.clone();
            let v = run_episode(&mut probe, &mut env, tracker, 0.0, beta, cfg, &mut explore, None)?;
            let objective = (1.0 - beta) * v.utility + beta * v.fairness;
            validation.push((ep, objective));
            if best.as_ref().map_or(true, |b| objective > b.2) {
                best = Some((nets.clone(), ep, objective));
            }
        }
    }
    let (best_nets, best_episode, best_objective) = best.expect("at least one validation episode");
    let best = TrainedPolicy { nets: best_nets, beta_train: beta };
    let eval_seed = seed ^ 0x5eed_e7a1;
    let eval = evaluate_policy(&best, &eval_spec, cfg, beta, cfg.n_eval, eval_seed)?;
    let eval_row = EvalRow::new(&run_id, env_spec, cfg, beta, beta, seed, &eval);
    Ok(TrainRunResult { run_id, best, best_episode, best_objective, validation, log, eval, eval_row })
}

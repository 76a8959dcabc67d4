//! JSON experiment configuration.
//!
//! Every block is optional except `env.kind`; omitted keys take the
//! environment's defaults. `--set a.b=value` overrides address the same
//! key paths; `value` is parsed as JSON and falls back to a bare string.
//!
//! ```json
//! {
//!   "seed": 1,
//!   "env": { "kind": "biaseddm", "params": { "horizon": 100 }, "shaping": false },
//!   "learner": { "mode": "so", "beta": 0.5, "gamma": 0.95, "lr": 0.0003,
//!                "buffer_capacity": 250000, "batch_size": 32, "learn_every": 4,
//!                "target_sync": 10, "validate_every": 20, "n_episodes": 200,
//!                "eps_start": 1.0, "eps_end": 0.05, "n_eval": 50,
//!                "hidden_dims": [20, 20], "frozen_utility_checkpoint": null },
//!   "fairness": { "kind": "variance", "alpha": 1.0, "ggf_weights": null,
//!                 "warm_w": 2.0, "gamma_p": 0.999 },
//!   "sweep": { "betas": [0.0, 0.5, 1.0], "seeds": [1, 2], "modes": ["jo"] },
//!   "output": { "directory": "out", "sweep_csv": "sweep.csv", ... }
//! }
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::envs::{EnvKind, EnvParams, EnvSpec};
use crate::error::{Error, Result};
use crate::fairness::{FairnessKind, FairnessSpec};
use crate::learner::{FairnessSetup, LearnerConfig, Mode};
use crate::types::TradeoffWeight;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub env: EnvBlock,
    pub learner: LearnerBlock,
    pub fairness: FairnessBlock,
    pub sweep: Option<SweepBlock>,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvBlock {
    pub kind: Option<EnvKind>,
    pub params: EnvParams,
    /// Defaults to on for `job` only.
    pub shaping: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerBlock {
    pub mode: Option<Mode>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub lr: Option<f64>,
    pub buffer_capacity: Option<usize>,
    pub batch_size: Option<usize>,
    pub learn_every: Option<usize>,
    pub target_sync: Option<usize>,
    pub validate_every: Option<usize>,
    pub n_episodes: Option<usize>,
    pub eps_start: Option<f64>,
    pub eps_end: Option<f64>,
    pub n_eval: Option<usize>,
    pub hidden_dims: Option<Vec<usize>>,
    pub frozen_utility_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessBlock {
    pub kind: Option<FairnessKind>,
    pub alpha: Option<f64>,
    pub ggf_weights: Option<Vec<f64>>,
    pub warm_w: Option<f64>,
    pub gamma_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    pub betas: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub modes: Option<Vec<Mode>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub sweep_csv: String,
    pub pareto_csv: String,
    pub heatmap_csv: String,
    pub pareto_approx_csv: String,
    pub select_csv: String,
    pub evaluate_csv: String,
    pub theorem_csv: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            sweep_csv: "sweep.csv".into(),
            pareto_csv: "pareto.csv".into(),
            heatmap_csv: "heatmap.csv".into(),
            pareto_approx_csv: "pareto_approx.csv".into(),
            select_csv: "selected.csv".into(),
            evaluate_csv: "evaluate.csv".into(),
            theorem_csv: "theorem_check.csv".into(),
        }
    }
}

/// Default β grid, denser near 1 for `biaseddm`.
pub fn default_betas(env: EnvKind) -> Vec<f64> {
    let mut b: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    b.extend([0.95, 0.99]);
    if env == EnvKind::BiasedDm {
        b.push(0.995);
    }
    b.push(0.999);
    if env == EnvKind::BiasedDm {
        b.push(0.9995);
    }
    b.push(1.0);
    b
}

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_SEED: u64 = 1;

/// A fully resolved single run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub env: EnvSpec,
    pub learner: LearnerConfig,
    pub seed: u64,
}

/// A fully resolved sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSweep {
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key.path=value` overrides in order.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut tree = serde_json::to_value(self)?;
        for o in overrides {
            let (path, value) = parse_override(o.as_ref())?;
            set_path(&mut tree, &path, value)?;
        }
        Ok(serde_json::from_value(tree)?)
    }

    pub fn env_kind(&self) -> Result<EnvKind> {
        self.env.kind.ok_or_else(|| Error::Usage("no environment given (set env.kind or --env)".into()))
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        let kind = self.env_kind()?;
        let shaping = self.env.shaping.unwrap_or(kind == EnvKind::Job);
        Ok(EnvSpec::with_params(kind, self.env.params.clone()).with_shaping(shaping))
    }

    /// Learner config for `mode` and `beta`, defaults filled from the env.
    pub fn learner_config(&self, mode: Mode, beta: f64) -> Result<LearnerConfig> {
        let spec = self.env_spec()?;
        let mut c = LearnerConfig::defaults(spec.kind, spec.n_agents, mode, TradeoffWeight::new(beta)?);
        let l = &self.learner;
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = l.$f.clone() { c.$f = v; })* };
        }
        take!(gamma, lr, buffer_capacity, batch_size, learn_every, target_sync, validate_every);
        take!(n_episodes, eps_start, eps_end, n_eval, hidden_dims);
        c.frozen_utility_checkpoint = l.frozen_utility_checkpoint.clone();
        c.fairness = self.fairness_setup(spec.kind, spec.n_agents)?;
        c.validate()?;
        Ok(c)
    }

    pub fn fairness_setup(&self, env: EnvKind, n_agents: usize) -> Result<FairnessSetup> {
        let f = &self.fairness;
        let kind = f.kind.unwrap_or(FairnessKind::Variance);
        let spec = match kind {
            FairnessKind::AlphaFair => FairnessSpec::alpha_fair(f.alpha.unwrap_or(1.0))?,
            FairnessKind::Ggf => match &f.ggf_weights {
                Some(w) if w.len() != n_agents => {
                    return Err(Error::Config(format!("{} GGF weights for {n_agents} agents", w.len())));
                }
                Some(w) => FairnessSpec::ggf(w.clone())?,
                None => FairnessSpec::ggf_halving(n_agents),
            },
            k => FairnessSpec::canonical(k, n_agents, 1.0),
        };
        let (warm_w, gamma_p) = env.tracker_defaults(kind);
        let setup = FairnessSetup {
            spec,
            warm_w: f.warm_w.unwrap_or(warm_w),
            gamma_p: f.gamma_p.unwrap_or(gamma_p),
        };
        if !(setup.warm_w >= 0.0 && setup.warm_w.is_finite()) {
            return Err(Error::Config("warm_w must be finite and non-negative".into()));
        }
        if !(setup.gamma_p > 0.0 && setup.gamma_p <= 1.0) {
            return Err(Error::Config("gamma_p must lie in (0, 1]".into()));
        }
        Ok(setup)
    }

    /// The single run selected by the learner block and `seed`.
    pub fn resolve_run(&self) -> Result<ResolvedRun> {
        let mode = self.learner.mode.unwrap_or(Mode::Jo);
        let beta = self.learner.beta.unwrap_or(0.0);
        Ok(ResolvedRun {
            env: self.env_spec()?,
            learner: self.learner_config(mode, beta)?,
            seed: self.seed.unwrap_or(DEFAULT_SEED),
        })
    }

    pub fn resolve_sweep(&self) -> Result<ResolvedSweep> {
        let kind = self.env_kind()?;
        let s = self.sweep.clone().unwrap_or_default();
        let sweep = ResolvedSweep {
            betas: s.betas.unwrap_or_else(|| default_betas(kind)),
            seeds: s.seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec()),
            modes: s.modes.unwrap_or_else(|| vec![Mode::Jo, Mode::So]),
        };
        if sweep.betas.is_empty() || sweep.seeds.is_empty() || sweep.modes.is_empty() {
            return Err(Error::Config("sweep betas, seeds and modes must be non-empty".into()));
        }
        for &b in &sweep.betas {
            TradeoffWeight::new(b)?;
        }
        Ok(sweep)
    }
}

/// Splits `a.b.c=value` into a key path and a JSON value.
pub fn parse_override(s: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override '{s}' is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.trim().is_empty()) {
        return Err(Error::Usage(format!("override '{s}' has an empty key segment")));
    }
    let raw = raw.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.split('.').map(|p| p.trim().to_string()).collect(), value))
}

fn set_path(tree: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut node = tree;
    for (depth, key) in path.iter().enumerate() {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("'{}' is not an object", path[..depth].join("."))))?;
        if depth + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        node = obj.entry(key.clone()).or_insert(Value::Null);
    }
    unreachable!("override paths are non-empty")
}

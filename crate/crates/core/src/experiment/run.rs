//! Single runs on disk.
//!
//! Each run lives in `<out>/<env>/<mode>/<fairness>/beta_<b>/seed_<s>/`:
//!
//! ```text
//! config.json         resolved config; reloading it reproduces the run
//! train_log.csv       run_id, episode, epsilon, mean_loss, episode_utility, episode_fairness, wall_ms
//! eval.csv            one evaluation row at beta_test = beta_train
//! checkpoint_q.dcaf   jo
//! checkpoint_u.dcaf   so, fo (the frozen net)
//! checkpoint_f.dcaf   so, fo
//! ```

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::learner::{
    default_run_id, evaluate_policy, run_training, EvalRow, LearnerConfig, Mode, Nets, TrainRunResult, TrainedPolicy,
};
use crate::valuenet::{load_checkpoint, save_checkpoint, Metadata, NetRole, ValueNet};

pub const CONFIG_FILE: &str = "config.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EVAL_FILE: &str = "eval.csv";

pub fn checkpoint_file(role: NetRole) -> String {
    format!("checkpoint_{}.dcaf", role.name())
}

/// An evaluation row plus where the run's checkpoints live.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub row: EvalRow,
    pub run_dir: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

pub fn run_dir(out: &Path, env: &EnvSpec, cfg: &LearnerConfig, seed: u64) -> PathBuf {
    out.join(env.kind.name())
        .join(cfg.mode.name())
        .join(cfg.fairness.spec.kind().name())
        .join(format!("beta_{}", cfg.beta.value()))
        .join(format!("seed_{seed}"))
}

/// Writes via a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

/// Writes `dir/name` and returns its path.
pub fn emit_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf> {
    let path = dir.join(name);
    write_csv(&path, rows)?;
    Ok(path)
}

pub fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_csv(&std::fs::read_to_string(path)?)
}

/// A checkpoint path, or a run directory holding a `u` (else `q`) checkpoint.
pub fn frozen_checkpoint_path(p: &Path) -> Result<PathBuf> {
    if !p.is_dir() {
        return Ok(p.to_path_buf());
    }
    [NetRole::U, NetRole::Q]
        .into_iter()
        .map(|r| p.join(checkpoint_file(r)))
        .find(|c| c.is_file())
        .ok_or_else(|| Error::Config(format!("no utility checkpoint in {}", p.display())))
}

/// The config pinned to one run: mode, β and seed explicit, no sweep block.
fn pin(cfg: &ExperimentConfig, lc: &LearnerConfig, seed: u64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.seed = Some(seed);
    c.learner.mode = Some(lc.mode);
    c.learner.beta = Some(lc.beta.value());
    c.learner.frozen_utility_checkpoint = lc.frozen_utility_checkpoint.clone();
    c.sweep = None;
    c
}

fn metadata(env: &EnvSpec, lc: &LearnerConfig, seed: u64, role: NetRole, run_id: &str, config_json: &str) -> Metadata {
    Metadata::from([
        ("env".to_string(), env.kind.name().to_string()),
        ("mode".to_string(), lc.mode.name().to_string()),
        ("fairness_kind".to_string(), lc.fairness.spec.kind().name().to_string()),
        ("beta".to_string(), lc.beta.value().to_string()),
        ("seed".to_string(), seed.to_string()),
        ("role".to_string(), role.name().to_string()),
        ("run_id".to_string(), run_id.to_string()),
        ("config".to_string(), config_json.to_string()),
    ])
}

fn role_nets(nets: &Nets) -> Vec<(NetRole, &ValueNet)> {
    match nets {
        Nets::Jo { q } => vec![(NetRole::Q, q)],
        Nets::So { u, f } => vec![(NetRole::U, u), (NetRole::F, f)],
        Nets::Fo { u_frozen, f } => vec![(NetRole::U, u_frozen), (NetRole::F, f)],
    }
}

/// Trains one run and writes its directory under `out`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<RunRecord> {
    let mut run = cfg.resolve_run()?;
    if let Some(p) = &run.learner.frozen_utility_checkpoint {
        run.learner.frozen_utility_checkpoint = Some(frozen_checkpoint_path(p)?);
    }
    let result = run_training(&run.env, &run.learner, run.seed)?;
    write_run(cfg, &run.env, &run.learner, run.seed, &result, out)
}

/// Writes a finished run's files.
pub fn write_run(
    cfg: &ExperimentConfig,
    env: &EnvSpec,
    lc: &LearnerConfig,
    seed: u64,
    result: &TrainRunResult,
    out: &Path,
) -> Result<RunRecord> {
    let dir = run_dir(out, env, lc, seed);
    std::fs::create_dir_all(&dir)?;
    let config_json = pin(cfg, lc, seed).to_json();
    write_atomic(&dir.join(CONFIG_FILE), config_json.as_bytes())?;
    write_csv(&dir.join(TRAIN_LOG_FILE), &result.log)?;
    write_csv(&dir.join(EVAL_FILE), std::slice::from_ref(&result.eval_row))?;
    let mut checkpoints = Vec::new();
    for (role, net) in role_nets(&result.best.nets) {
        let path = dir.join(checkpoint_file(role));
        let meta = metadata(env, lc, seed, role, &result.run_id, &config_json);
        // A frozen net taken from a jo run still carries the `q` role.
        let mut net = net.clone();
        net.set_role(role);
        write_atomic(&path, &save_checkpoint(&net, &meta))?;
        checkpoints.push(path);
    }
    Ok(RunRecord { row: result.eval_row.clone(), run_dir: dir, checkpoints })
}

/// A trained run reloaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub run_id: String,
    pub config: ExperimentConfig,
    pub env: EnvSpec,
    pub learner: LearnerConfig,
    pub seed: u64,
    pub policy: TrainedPolicy,
}

fn load_role(dir: &Path, role: NetRole) -> Result<ValueNet> {
    let path = dir.join(checkpoint_file(role));
    let bytes = std::fs::read(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let (net, _) = load_checkpoint(&bytes)?;
    if net.role() != role {
        return Err(Error::Checkpoint(format!("{} holds a {} net", path.display(), net.role().name())));
    }
    Ok(net)
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let text = std::fs::read_to_string(dir.join(CONFIG_FILE))
        .map_err(|e| Error::Config(format!("{}: {e}", dir.join(CONFIG_FILE).display())))?;
    let config = ExperimentConfig::from_json(&text)?;
    let run = config.resolve_run()?;
    let nets = match run.learner.mode {
        Mode::Jo => Nets::Jo { q: load_role(dir, NetRole::Q)? },
        Mode::So => Nets::So { u: load_role(dir, NetRole::U)?, f: load_role(dir, NetRole::F)? },
        Mode::Fo => Nets::Fo { u_frozen: load_role(dir, NetRole::U)?, f: load_role(dir, NetRole::F)? },
    };
    for net in nets.trainable() {
        if net.config().input_dim != run.env.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint input {} for env features {}",
                net.config().input_dim,
                run.env.feature_dim
            )));
        }
    }
    let beta_train = run.learner.beta.value();
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        run_id: default_run_id(&run.env, &run.learner, run.seed),
        config,
        env: run.env,
        learner: run.learner,
        seed: run.seed,
        policy: TrainedPolicy { nets, beta_train },
    })
}

impl LoadedRun {
    pub fn evaluate(&self, beta_test: f64, n_eval: usize, seed: u64) -> Result<EvalRow> {
        let s = evaluate_policy(&self.policy, &self.env, &self.learner, beta_test, n_eval, seed)?;
        Ok(EvalRow::new(&self.run_id, &self.env, &self.learner, self.policy.beta_train, beta_test, seed, &s))
    }
}

/// Greedy evaluation of saved runs at each `beta_test` (default: the run's own β).
pub fn cmd_evaluate(dirs: &[PathBuf], betas_test: Option<&[f64]>, n_eval: Option<usize>, seed: u64) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    for d in dirs {
        let run = load_run(d)?;
        let own = [run.policy.beta_train];
        for &b in betas_test.unwrap_or(&own) {
            rows.push(run.evaluate(b, n_eval.unwrap_or(run.learner.n_eval), seed)?);
        }
    }
    Ok(rows)
}

/// One heatmap cell for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub run_id: String,
    pub env: String,
    pub mode: String,
    pub seed: u64,
    pub beta_train: f64,
    pub beta_test: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

fn load_split_runs(dirs: &[PathBuf]) -> Result<Vec<LoadedRun>> {
    let runs = dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    if let Some(r) = runs.iter().find(|r| r.learner.mode == Mode::Jo) {
        return Err(Error::Config(format!("{} is a jo run; only so and fo runs take a beta_test", r.dir.display())));
    }
    Ok(runs)
}

/// β_train × β_test grid over SO/FO runs: a `utility` and a `variance` row per cell.
pub fn cmd_heatmap(dirs: &[PathBuf], betas_test: &[f64], n_eval: Option<usize>, seed: u64) -> Result<Vec<HeatmapRow>> {
    if dirs.is_empty() || betas_test.is_empty() {
        return Err(Error::Usage("heatmap needs at least one run and one beta_test".into()));
    }
    let runs = load_split_runs(dirs)?;
    let mut rows = Vec::new();
    for run in &runs {
        for &bt in betas_test {
            let s = evaluate_policy(&run.policy, &run.env, &run.learner, bt, n_eval.unwrap_or(run.learner.n_eval), seed)?;
            for (metric, mean, std) in [("utility", s.utility_mean, s.utility_std), ("variance", s.variance_mean, s.variance_std)] {
                rows.push(HeatmapRow {
                    run_id: run.run_id.clone(),
                    env: run.env.kind.name().into(),
                    mode: run.learner.mode.name().into(),
                    seed: run.seed,
                    beta_train: run.policy.beta_train,
                    beta_test: bt,
                    metric: metric.into(),
                    mean,
                    std,
                });
            }
        }
    }
    Ok(rows)
}

/// Index of the β nearest to `target`, the lower one on ties.
pub fn nearest_beta(betas: &[f64], target: f64) -> Option<usize> {
    (0..betas.len()).min_by(|&a, &b| {
        let (da, db) = ((betas[a] - target).abs(), (betas[b] - target).abs());
        da.total_cmp(&db).then(betas[a].total_cmp(&betas[b]))
    })
}

/// Evaluates every `beta_test` with the run trained at the nearest β.
pub fn cmd_pareto_approx(dirs: &[PathBuf], betas_test: &[f64], n_eval: Option<usize>, seed: u64) -> Result<Vec<EvalRow>> {
    if dirs.len() < 2 {
        return Err(Error::Usage(format!("pareto-approx needs at least 2 runs, got {}", dirs.len())));
    }
    if betas_test.is_empty() {
        return Err(Error::Usage("pareto-approx needs at least one beta_test".into()));
    }
    let runs = load_split_runs(dirs)?;
    if runs.iter().any(|r| r.env.kind != runs[0].env.kind) {
        return Err(Error::Config("pareto-approx runs must share one environment".into()));
    }
    let trained: Vec<f64> = runs.iter().map(|r| r.policy.beta_train).collect();
    betas_test
        .iter()
        .map(|&bt| {
            let run = &runs[nearest_beta(&trained, bt).expect("runs are non-empty")];
            run.evaluate(bt, n_eval.unwrap_or(run.learner.n_eval), seed)
        })
        .collect()
}

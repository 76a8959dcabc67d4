//! Parallel β × seed × mode sweeps and their Pareto fronts.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::write_run;
use crate::error::{Error, Result};
use crate::fairness::FairnessKind;
use crate::learner::{default_run_id, run_training, EvalRow, Mode};

/// An evaluation row with optional metrics, and a status of `ok` or `failed: <reason>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub run_id: String,
    pub env: String,
    pub mode: String,
    pub fairness_kind: String,
    pub beta_train: f64,
    pub beta_test: f64,
    pub seed: u64,
    pub utility_mean: Option<f64>,
    pub utility_std: Option<f64>,
    pub variance_mean: Option<f64>,
    pub alphafair_mean: Option<f64>,
    pub ggf_mean: Option<f64>,
    pub maximin_mean: Option<f64>,
    pub status: String,
}

impl From<EvalRow> for SweepRow {
    fn from(r: EvalRow) -> Self {
        Self {
            run_id: r.run_id,
            env: r.env,
            mode: r.mode,
            fairness_kind: r.fairness_kind,
            beta_train: r.beta_train,
            beta_test: r.beta_test,
            seed: r.seed,
            utility_mean: Some(r.utility_mean),
            utility_std: Some(r.utility_std),
            variance_mean: Some(r.variance_mean),
            alphafair_mean: r.alphafair_mean,
            ggf_mean: Some(r.ggf_mean),
            maximin_mean: Some(r.maximin_mean),
            status: "ok".into(),
        }
    }
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Mean sweep outcome at one β, flagged if no other point dominates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub env: String,
    pub mode: String,
    pub fairness_kind: String,
    pub beta: f64,
    pub n_seeds: usize,
    pub utility_mean: f64,
    pub variance_mean: f64,
    pub pareto: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub pareto: Vec<ParetoRow>,
}

/// `true` where no other point is at least as good in both coordinates and
/// strictly better in one.
pub fn non_dominated(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(u, f)| !points.iter().any(|&(u2, f2)| u2 >= u && f2 >= f && (u2 > u || f2 > f)))
        .collect()
}

/// Per (env, mode): mean utility and variance over successful seeds at each
/// β, in first-seen order, with non-dominated points flagged.
pub fn pareto_rows(rows: &[SweepRow]) -> Vec<ParetoRow> {
    let mut groups: Vec<((String, String), Vec<ParetoRow>)> = Vec::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        let (Some(u), Some(v)) = (r.utility_mean, r.variance_mean) else { continue };
        let key = (r.env.clone(), r.mode.clone());
        let idx = match groups.iter().position(|g| g.0 == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new()));
                groups.len() - 1
            }
        };
        let pts = &mut groups[idx].1;
        match pts.iter_mut().find(|p| p.beta == r.beta_train && p.fairness_kind == r.fairness_kind) {
            Some(p) => {
                p.utility_mean += u;
                p.variance_mean += v;
                p.n_seeds += 1;
            }
            None => pts.push(ParetoRow {
                env: r.env.clone(),
                mode: r.mode.clone(),
                fairness_kind: r.fairness_kind.clone(),
                beta: r.beta_train,
                n_seeds: 1,
                utility_mean: u,
                variance_mean: v,
                pareto: false,
            }),
        }
    }
    let mut out = Vec::new();
    for (_, mut pts) in groups {
        for p in &mut pts {
            p.utility_mean /= p.n_seeds as f64;
            p.variance_mean /= p.n_seeds as f64;
        }
        let flags = non_dominated(&pts.iter().map(|p| (p.utility_mean, p.variance_mean)).collect::<Vec<_>>());
        for (p, f) in pts.iter_mut().zip(flags) {
            p.pareto = f;
        }
        out.extend(pts);
    }
    out
}

/// Trains modes × betas × seeds on `workers` threads (0 = all cores). Rows
/// come back in grid order; failed runs keep their row with the error in
/// `status`.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<SweepOutput> {
    let grid = cfg.resolve_sweep()?;
    let env = cfg.env_spec()?;
    let mut jobs: Vec<(Mode, f64, u64)> = Vec::new();
    for &m in &grid.modes {
        for &b in &grid.betas {
            jobs.extend(grid.seeds.iter().map(|&s| (m, b, s)));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let rows = pool.install(|| {
        jobs.par_iter()
            .map(|&(mode, beta, seed)| {
                let lc = cfg.learner_config(mode, beta);
                let attempt = lc.as_ref().map_err(|e| e.to_string()).and_then(|lc| {
                    let mut lc = lc.clone();
                    if let Some(p) = &lc.frozen_utility_checkpoint {
                        lc.frozen_utility_checkpoint = Some(super::run::frozen_checkpoint_path(p).map_err(|e| e.to_string())?);
                    }
                    let res = run_training(&env, &lc, seed).map_err(|e| e.to_string())?;
                    write_run(cfg, &env, &lc, seed, &res, out).map_err(|e| e.to_string())
                });
                match attempt {
                    Ok(rec) => SweepRow::from(rec.row),
                    Err(msg) => failed_row(cfg, mode, beta, seed, msg),
                }
            })
            .collect::<Vec<_>>()
    });
    let pareto = pareto_rows(&rows);
    Ok(SweepOutput { rows, pareto })
}

fn failed_row(cfg: &ExperimentConfig, mode: Mode, beta: f64, seed: u64, msg: String) -> SweepRow {
    let env = cfg.env_spec().expect("validated before the sweep");
    let fairness = cfg.fairness.kind.unwrap_or(FairnessKind::Variance);
    let run_id = match cfg.learner_config(mode, beta) {
        Ok(lc) => default_run_id(&env, &lc, seed),
        Err(_) => format!("{}-{}-{}-b{beta}-s{seed}", env.kind.name(), mode.name(), fairness.name()),
    };
    SweepRow {
        run_id,
        env: env.kind.name().into(),
        mode: mode.name().into(),
        fairness_kind: fairness.name().into(),
        beta_train: beta,
        beta_test: beta,
        seed,
        utility_mean: None,
        utility_std: None,
        variance_mean: None,
        alphafair_mean: None,
        ggf_mean: None,
        maximin_mean: None,
        status: format!("failed: {}", msg.replace(['\n', '\r'], " ")),
    }
}

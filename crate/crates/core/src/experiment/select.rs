//! Cross-β model selection by `w_u * utility + w_f * variance_mean`, where
//! `variance_mean` already holds the negative variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_W_U: f64 = 0.1;
pub const DEFAULT_W_F: f64 = 0.9;

/// The winning β for one (env, mode), with seed-averaged metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectRow {
    pub env: String,
    pub mode: String,
    pub beta_train: f64,
    pub beta_test: f64,
    pub n_rows: usize,
    pub utility_mean: f64,
    pub variance_mean: f64,
    pub score: f64,
}

/// Reads any evaluation-shaped CSV (eval, sweep or pareto-approx output).
/// Needs `env`, `mode`, `beta_train`, `utility_mean` and `variance_mean`;
/// `beta_test` defaults to `beta_train`; rows whose `status` is present and
/// not `ok`, or whose metrics are blank, are skipped.
pub fn cmd_select(csv_text: &str, w_u: f64, w_f: f64) -> Result<Vec<SelectRow>> {
    if !(w_u.is_finite() && w_f.is_finite()) {
        return Err(Error::InvalidValue("selection weights must be finite".into()));
    }
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| Error::Config(format!("CSV lacks a '{name}' column")));
    let (env, mode, bt) = (need("env")?, need("mode")?, need("beta_train")?);
    let (um, vm) = (need("utility_mean")?, need("variance_mean")?);
    let (bte, status) = (col("beta_test"), col("status"));
    let num = |rec: &csv::StringRecord, i: usize, name: &str| -> Result<Option<f64>> {
        let s = rec.get(i).unwrap_or("").trim();
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("bad {name} value '{s}'")))
    };

    let mut cells: Vec<SelectRow> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if status.is_some_and(|i| rec.get(i).unwrap_or("") != "ok") {
            continue;
        }
        let (Some(u), Some(v)) = (num(&rec, um, "utility_mean")?, num(&rec, vm, "variance_mean")?) else {
            continue;
        };
        let beta_train = num(&rec, bt, "beta_train")?.ok_or_else(|| Error::Config("blank beta_train".into()))?;
        let beta_test = match bte {
            Some(i) => num(&rec, i, "beta_test")?.unwrap_or(beta_train),
            None => beta_train,
        };
        let (e, m) = (rec.get(env).unwrap_or("").to_string(), rec.get(mode).unwrap_or("").to_string());
        match cells
            .iter_mut()
            .find(|c| c.env == e && c.mode == m && c.beta_train == beta_train && c.beta_test == beta_test)
        {
            Some(c) => {
                c.utility_mean += u;
                c.variance_mean += v;
                c.n_rows += 1;
            }
            None => cells.push(SelectRow {
                env: e,
                mode: m,
                beta_train,
                beta_test,
                n_rows: 1,
                utility_mean: u,
                variance_mean: v,
                score: 0.0,
            }),
        }
    }
    if cells.is_empty() {
        return Err(Error::Config("no usable rows to select from".into()));
    }
    for c in &mut cells {
        c.utility_mean /= c.n_rows as f64;
        c.variance_mean /= c.n_rows as f64;
        c.score = w_u * c.utility_mean + w_f * c.variance_mean;
    }

    let mut best: Vec<SelectRow> = Vec::new();
    for c in cells {
        match best.iter_mut().find(|b| b.env == c.env && b.mode == c.mode) {
            Some(b) => {
                let lower = (c.beta_train, c.beta_test) < (b.beta_train, b.beta_test);
                if c.score > b.score || (c.score == b.score && lower) {
                    *b = c;
                }
            }
            None => best.push(c),
        }
    }
    Ok(best)
}

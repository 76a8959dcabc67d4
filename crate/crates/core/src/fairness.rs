//! Fairness functions over the payoff vector `Z`, per-step deltas, per-agent
//! reward decompositions, and the payoff tracker with warm starts and past
//! discounting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FairnessKind {
    Variance,
    #[serde(alias = "alpha_fair", alias = "alpha")]
    AlphaFair,
    Ggf,
    Maximin,
}

impl FairnessKind {
    pub fn name(self) -> &'static str {
        match self {
            FairnessKind::Variance => "variance",
            FairnessKind::AlphaFair => "alphafair",
            FairnessKind::Ggf => "ggf",
            FairnessKind::Maximin => "maximin",
        }
    }
}

impl std::str::FromStr for FairnessKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "variance" | "var" => Ok(FairnessKind::Variance),
            "alphafair" | "alpha" => Ok(FairnessKind::AlphaFair),
            "ggf" => Ok(FairnessKind::Ggf),
            "maximin" | "mmf" => Ok(FairnessKind::Maximin),
            other => Err(Error::Config(format!("unknown fairness kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FairnessSpec {
    Variance,
    AlphaFair { alpha: f64 },
    /// Weights must be positive and strictly decreasing.
    Ggf { weights: Vec<f64> },
    Maximin,
}

impl FairnessSpec {
    pub fn alpha_fair(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidValue(format!("alpha {alpha} must be finite and >= 0")));
        }
        Ok(FairnessSpec::AlphaFair { alpha })
    }

    pub fn ggf(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidValue("GGF weights must be positive".into()));
        }
        if weights.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidValue("GGF weights must be strictly decreasing".into()));
        }
        Ok(FairnessSpec::Ggf { weights })
    }

    /// `[1, 1/2, ..., 2^-(n-1)]`.
    pub fn ggf_halving(n: usize) -> Self {
        FairnessSpec::Ggf { weights: (0..n).map(|i| 0.5f64.powi(i as i32)).collect() }
    }

    /// The fairness function used for training and validation, given a kind and agent count.
    pub fn canonical(kind: FairnessKind, n: usize, alpha: f64) -> Self {
        match kind {
            FairnessKind::Variance => FairnessSpec::Variance,
            FairnessKind::AlphaFair => FairnessSpec::AlphaFair { alpha },
            FairnessKind::Ggf => FairnessSpec::ggf_halving(n),
            FairnessKind::Maximin => FairnessSpec::Maximin,
        }
    }

    pub fn kind(&self) -> FairnessKind {
        match self {
            FairnessSpec::Variance => FairnessKind::Variance,
            FairnessSpec::AlphaFair { .. } => FairnessKind::AlphaFair,
            FairnessSpec::Ggf { .. } => FairnessKind::Ggf,
            FairnessSpec::Maximin => FairnessKind::Maximin,
        }
    }
}

pub fn mean(z: &[f64]) -> f64 {
    if z.is_empty() {
        0.0
    } else {
        z.iter().sum::<f64>() / z.len() as f64
    }
}

/// Population variance (divide by n).
pub fn population_variance(z: &[f64]) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    let m = mean(z);
    z.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / z.len() as f64
}

pub fn fairness_value(spec: &FairnessSpec, z: &[f64]) -> Result<f64> {
    match spec {
        FairnessSpec::Variance => Ok(-population_variance(z)),
        FairnessSpec::AlphaFair { alpha } => {
            if let Some(bad) = z.iter().find(|x| !(**x > 0.0)) {
                return Err(Error::Domain(format!("alpha-fair requires z > 0, got {bad}")));
            }
            if *alpha == 1.0 {
                Ok(z.iter().map(|x| x.ln()).sum())
            } else {
                let e = 1.0 - alpha;
                Ok(z.iter().map(|x| x.powf(e) / e).sum())
            }
        }
        FairnessSpec::Ggf { weights } => {
            if weights.len() < z.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} GGF weights for {} agents",
                    weights.len(),
                    z.len()
                )));
            }
            let mut sorted = z.to_vec();
            sorted.sort_by(f64::total_cmp);
            Ok(sorted.iter().zip(weights).map(|(x, w)| w * x).sum())
        }
        FairnessSpec::Maximin => Ok(min_of(z)),
    }
}

fn min_of(z: &[f64]) -> f64 {
    z.iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_pair(z: &[f64], z_next: &[f64]) -> Result<()> {
    if z.len() != z_next.len() {
        return Err(Error::DimensionMismatch(format!(
            "payoff vectors of lengths {} and {}",
            z.len(),
            z_next.len()
        )));
    }
    Ok(())
}

/// One-step change in fairness caused by moving from `z` to `z_next`.
pub fn fairness_delta(spec: &FairnessSpec, z: &[f64], z_next: &[f64]) -> Result<f64> {
    check_pair(z, z_next)?;
    Ok(fairness_value(spec, z_next)? - fairness_value(spec, z)?)
}

/// Splits the fairness change into one reward per agent.
pub fn decompose_reward(spec: &FairnessSpec, z: &[f64], z_next: &[f64]) -> Result<Vec<f64>> {
    check_pair(z, z_next)?;
    let n = z.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let nf = n as f64;
    match spec {
        FairnessSpec::Variance => {
            let m = mean(z);
            let m_next = mean(z_next);
            Ok(z.iter()
                .zip(z_next)
                .map(|(a, b)| -(b - m_next) * (b - m_next) / nf + (a - m) * (a - m) / nf)
                .collect())
        }
        FairnessSpec::AlphaFair { .. } | FairnessSpec::Ggf { .. } => {
            let share = fairness_delta(spec, z, z_next)? / nf;
            Ok(vec![share; n])
        }
        FairnessSpec::Maximin => {
            let lo = min_of(z);
            let lo_next = min_of(z_next);
            let dmin = lo_next - lo;
            let raw: Vec<f64> = z
                .iter()
                .zip(z_next)
                .map(|(&a, &b)| {
                    let mut r = dmin / nf;
                    if a == lo {
                        r += b - a;
                    }
                    if b == lo_next {
                        r += b - a;
                    }
                    r
                })
                .collect();
            let total: f64 = raw.iter().sum();
            if total == 0.0 {
                return Ok(vec![0.0; n]);
            }
            Ok(raw.iter().map(|r| r / total * dmin).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerMode {
    /// Discounted running sums.
    Additive,
    /// Discounted resource rate: numerator and denominator both decay.
    Rate,
}

/// Accumulated per-agent payoffs `Z` that fairness is measured over.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTracker {
    pub mode: TrackerMode,
    pub z: Vec<f64>,
    pub res: Vec<f64>,
    pub t: Vec<f64>,
    pub gamma_p: f64,
    pub warm_w: f64,
}

impl PayoffTracker {
    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.z)
    }

    /// `z` after applying `delta`, without mutating the tracker.
    pub fn peek(&self, delta: &[f64]) -> Vec<f64> {
        let mut c = self.clone();
        c.update(delta);
        c.z
    }

    /// Post-decision payoff of agent `i` had it alone received `d`.
    pub fn peek_agent(&self, i: usize, d: f64) -> f64 {
        match self.mode {
            TrackerMode::Additive => self.gamma_p * self.z[i] + d,
            TrackerMode::Rate => {
                let t = self.gamma_p * self.t[i] + 1.0;
                (self.gamma_p * self.res[i] + d) / t
            }
        }
    }

    pub fn update(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.n());
        match self.mode {
            TrackerMode::Additive => {
                for (z, d) in self.z.iter_mut().zip(delta) {
                    *z = self.gamma_p * *z + d;
                }
            }
            TrackerMode::Rate => {
                for i in 0..self.z.len() {
                    self.res[i] = self.gamma_p * self.res[i] + delta[i];
                    self.t[i] = self.gamma_p * self.t[i] + 1.0;
                    self.z[i] = self.res[i] / self.t[i];
                }
            }
        }
    }
}

/// Builds a tracker whose initial payoffs are drawn from `[w - w/8, w + w/8]`.
///
/// In rate mode each agent's numerator is its draw and every denominator is
/// the total of all draws, so initial rates sit near `1/n`.
pub fn init_tracker<R: Rng + ?Sized>(
    mode: TrackerMode,
    n: usize,
    warm_w: f64,
    gamma_p: f64,
    rng: &mut R,
) -> Result<PayoffTracker> {
    if !(warm_w.is_finite() && warm_w >= 0.0) {
        return Err(Error::InvalidValue(format!("warm start {warm_w} must be >= 0")));
    }
    if !(gamma_p > 0.0 && gamma_p <= 1.0) {
        return Err(Error::InvalidValue(format!("past discount {gamma_p} outside (0, 1]")));
    }
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            if warm_w == 0.0 {
                0.0
            } else {
                rng.gen_range(warm_w - warm_w / 8.0..=warm_w + warm_w / 8.0)
            }
        })
        .collect();
    let tracker = match mode {
        TrackerMode::Additive => PayoffTracker {
            mode,
            z: draws.clone(),
            res: draws,
            t: vec![0.0; n],
            gamma_p,
            warm_w,
        },
        TrackerMode::Rate => {
            let total: f64 = draws.iter().sum();
            let z = draws.iter().map(|d| if total > 0.0 { d / total } else { 0.0 }).collect();
            PayoffTracker { mode, z, res: draws, t: vec![total; n], gamma_p, warm_w }
        }
    };
    Ok(tracker)
}

/// The four reported metrics of a final payoff vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` when some payoff is not strictly positive.
    pub alpha_fair: Option<f64>,
    pub ggf: f64,
    pub maximin: f64,
    /// Negative population variance (0 when all equal).
    pub variance: f64,
}

pub fn evaluate_metrics(z: &[f64]) -> Metrics {
    let var = population_variance(z);
    Metrics {
        alpha_fair: fairness_value(&FairnessSpec::AlphaFair { alpha: 1.0 }, z).ok(),
        ggf: fairness_value(&FairnessSpec::ggf_halving(z.len()), z).unwrap_or(f64::NAN),
        maximin: min_of(z),
        variance: if var == 0.0 { 0.0 } else { -var },
    }
}

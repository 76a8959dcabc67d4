//! Exact checks of the one-step trade-off guarantees on random instances.
//!
//! Each instance has integer per-candidate utility `U` and fairness `F`
//! tables standing in for perfect estimates. The allocator is solved on
//! `U + eta * F` for dyadic `eta`, so every score is exact in `f64` and every
//! assertion below is an equality or inequality without tolerance:
//!
//! * `fairness_monotone`: total `F` of the chosen allocation never drops as `eta` grows.
//! * `utility_monotone`: total `U` never rises as `eta` grows.
//! * `fairest_at_large_eta`: above `(U_max - U(A_f)) / (F(A_f) - F_second)`, the max-`F` allocation is chosen.
//! * `utilitarian_at_small_eta`: below the mirrored bound, the max-`U` allocation is chosen.
//! * `utilitarian_at_zero`: `eta = 0` chooses the max-`U` allocation.
//! * `solver_matches_oracle`: branch and bound equals exhaustive enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{solve, solve_exhaustive, AllocationProblem};
use crate::error::Result;
use crate::types::{CandidateAction, CandidateSet, ResourceCapacities};

pub const MAX_AGENTS: usize = 5;
pub const MAX_CANDIDATES: usize = 4;
pub const MAX_RESOURCES: usize = 2;
const TABLE_RANGE: i64 = 8;
const MIN_ETA: f64 = 1.0 / 1024.0;

/// `0` and 19 dyadic values from 1/16 to 48.
pub fn eta_grid() -> Vec<f64> {
    let m = [1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512, 768];
    std::iter::once(0.0).chain(m.iter().map(|&k| k as f64 / 16.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub capacities: Vec<f64>,
    /// `consumption[i][j]`; candidate 0 of every agent is the null action.
    pub consumption: Vec<Vec<Vec<f64>>>,
    pub u: Vec<Vec<i64>>,
    pub f: Vec<Vec<i64>>,
}

impl Instance {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let n = rng.gen_range(1..=MAX_AGENTS);
        let k = rng.gen_range(1..=MAX_RESOURCES);
        let capacities = (0..k).map(|_| rng.gen_range(0..=2) as f64).collect();
        let mut consumption = Vec::with_capacity(n);
        let (mut u, mut f) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let c = rng.gen_range(1..=MAX_CANDIDATES);
            consumption.push(
                (0..c)
                    .map(|j| (0..k).map(|_| if j == 0 { 0.0 } else { rng.gen_range(0..=2) as f64 }).collect())
                    .collect(),
            );
            u.push((0..c).map(|_| rng.gen_range(-TABLE_RANGE..=TABLE_RANGE)).collect());
            f.push((0..c).map(|_| rng.gen_range(-TABLE_RANGE..=TABLE_RANGE)).collect());
        }
        Self { capacities, consumption, u, f }
    }

    pub fn candidates(&self) -> CandidateSet {
        CandidateSet::new(
            self.consumption
                .iter()
                .map(|list| {
                    list.iter()
                        .enumerate()
                        .map(|(j, c)| {
                            if j == 0 {
                                CandidateAction::null(0, Vec::new(), c.len())
                            } else {
                                CandidateAction::consuming(j, Vec::new(), c.clone())
                            }
                        })
                        .collect()
                })
                .collect(),
        )
    }

    fn totals(&self, chosen: &[usize]) -> (i64, i64) {
        chosen.iter().enumerate().fold((0, 0), |(u, f), (i, &j)| (u + self.u[i][j], f + self.f[i][j]))
    }

    fn feasible(&self, chosen: &[usize]) -> bool {
        (0..self.capacities.len()).all(|r| {
            chosen.iter().enumerate().map(|(i, &j)| self.consumption[i][j][r]).sum::<f64>() <= self.capacities[r]
        })
    }

    /// `(U, F)` totals of every feasible allocation.
    pub fn feasible_totals(&self) -> Vec<(i64, i64)> {
        let sizes: Vec<usize> = self.u.iter().map(|c| c.len()).collect();
        let mut chosen = vec![0; sizes.len()];
        let mut out = Vec::new();
        loop {
            if self.feasible(&chosen) {
                out.push(self.totals(&chosen));
            }
            let mut i = 0;
            loop {
                if i == sizes.len() {
                    return out;
                }
                chosen[i] += 1;
                if chosen[i] < sizes[i] {
                    break;
                }
                chosen[i] = 0;
                i += 1;
            }
        }
    }

    fn values(&self, score: impl Fn(i64, i64) -> f64) -> Vec<Vec<f64>> {
        self.u
            .iter()
            .zip(&self.f)
            .map(|(u, f)| u.iter().zip(f).map(|(&a, &b)| score(a, b)).collect())
            .collect()
    }
}

/// Where an `eta` sits in the sweep; `Infinity` solves lexicographically on `(F, U)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eta {
    Finite(f64),
    Infinity,
}

/// Totals selected by the solver, plus whether the exhaustive oracle agrees.
fn select(inst: &Instance, eta: Eta) -> Result<((i64, i64), bool)> {
    let cs = inst.candidates();
    let caps = ResourceCapacities::new(inst.capacities.clone())?;
    // U spans at most 2 * MAX_AGENTS * TABLE_RANGE, so F * 256 + U orders by F first.
    let values = match eta {
        Eta::Finite(e) => inst.values(|u, f| u as f64 + e * f as f64),
        Eta::Infinity => inst.values(|u, f| f as f64 * 256.0 + u as f64),
    };
    let p = AllocationProblem::new(&values, &cs, &caps);
    let a = solve(&p)?;
    let b = solve_exhaustive(&p)?;
    let agree = a.objective == b.objective && a.allocation == b.allocation;
    Ok((inst.totals(&a.allocation.chosen), agree))
}

/// Smallest power of two strictly above `x`, at least 2^-10.
fn dyadic_above(x: f64) -> f64 {
    if x < MIN_ETA {
        return MIN_ETA;
    }
    let mut e = 1.0;
    while e <= x {
        e *= 2.0;
    }
    while e / 2.0 > x {
        e /= 2.0;
    }
    e
}

/// Largest power of two strictly below `x > 0`.
fn dyadic_below(x: f64) -> f64 {
    let mut e = 1.0;
    while e >= x {
        e /= 2.0;
    }
    while e * 2.0 < x {
        e *= 2.0;
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub instance: usize,
    pub check: String,
    pub detail: String,
    /// JSON dump of the instance for reproduction.
    pub repro: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub instances: usize,
    pub evaluations: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub n_instances: usize,
    pub checks: Vec<CheckRow>,
    pub violations: Vec<Violation>,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const CHECKS: [&str; 6] = [
    "fairness_monotone",
    "utility_monotone",
    "fairest_at_large_eta",
    "utilitarian_at_small_eta",
    "utilitarian_at_zero",
    "solver_matches_oracle",
];

/// Runs every check on one instance; `record(check, failed, detail)` is called per evaluation.
pub fn check_instance(inst: &Instance, mut record: impl FnMut(&str, bool, String)) -> Result<()> {
    let totals = inst.feasible_totals();
    let u_top = totals.iter().map(|t| t.0).max().expect("the all-null allocation is feasible");
    let f_top = totals.iter().map(|t| t.1).max().expect("non-empty");
    let u_of_fair = totals.iter().filter(|t| t.1 == f_top).map(|t| t.0).max().expect("non-empty");
    let f_of_util = totals.iter().filter(|t| t.0 == u_top).map(|t| t.1).max().expect("non-empty");
    let f_second = totals.iter().map(|t| t.1).filter(|&f| f < f_top).max();
    let u_second = totals.iter().map(|t| t.0).filter(|&u| u < u_top).max();

    let eta_fair = match f_second {
        Some(fs) => dyadic_above((u_top - u_of_fair) as f64 / (f_top - fs) as f64),
        None => 1.0,
    };
    let eta_util = match u_second {
        Some(us) if f_top > f_of_util => dyadic_below((u_top - us) as f64 / (f_top - f_of_util) as f64),
        _ => 1.0,
    };

    let mut etas = eta_grid();
    etas.extend([eta_fair, eta_util]);
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    let mut sweep: Vec<(Eta, (i64, i64))> = Vec::with_capacity(etas.len() + 1);
    for e in etas.into_iter().map(Eta::Finite).chain([Eta::Infinity]) {
        let (t, agree) = select(inst, e)?;
        record("solver_matches_oracle", !agree, format!("eta {e:?}"));
        sweep.push((e, t));
    }
    for w in sweep.windows(2) {
        let ((e0, (u0, f0)), (e1, (u1, f1))) = (w[0], w[1]);
        record("fairness_monotone", f1 < f0, format!("F {f0} at {e0:?} then {f1} at {e1:?}"));
        record("utility_monotone", u1 > u0, format!("U {u0} at {e0:?} then {u1} at {e1:?}"));
    }
    for &(e, (u, f)) in &sweep {
        match e {
            Eta::Finite(x) if x == 0.0 => {
                record("utilitarian_at_zero", u != u_top, format!("U {u}, max {u_top}"));
            }
            _ => {}
        }
        let large = match e {
            Eta::Finite(x) => x >= eta_fair,
            Eta::Infinity => true,
        };
        if large {
            record("fairest_at_large_eta", f != f_top, format!("F {f} at {e:?}, max {f_top}, bound {eta_fair}"));
        }
        if let Eta::Finite(x) = e {
            if x <= eta_util {
                record("utilitarian_at_small_eta", u != u_top, format!("U {u} at {x}, max {u_top}, bound {eta_util}"));
            }
        }
    }
    Ok(())
}

/// Generates `n_instances` seeded instances and checks each.
pub fn cmd_theorem_check(n_instances: usize, seed: u64) -> Result<TheoremReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks: Vec<CheckRow> = CHECKS
        .iter()
        .map(|c| CheckRow { check: c.to_string(), instances: 0, evaluations: 0, violations: 0 })
        .collect();
    let mut violations = Vec::new();
    for idx in 0..n_instances {
        let inst = Instance::random(&mut rng);
        let mut seen = [false; CHECKS.len()];
        check_instance(&inst, |check, failed, detail| {
            let c = CHECKS.iter().position(|&n| n == check).expect("known check");
            let row = &mut checks[c];
            row.evaluations += 1;
            if !seen[c] {
                seen[c] = true;
                row.instances += 1;
            }
            if failed {
                row.violations += 1;
                violations.push(Violation {
                    instance: idx,
                    check: check.to_string(),
                    detail,
                    repro: serde_json::to_string(&inst).expect("instance serializes"),
                });
            }
        })?;
    }
    Ok(TheoremReport { n_instances, checks, violations })
}

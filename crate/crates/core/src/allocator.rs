//! Exact centralized allocation: pick one candidate per agent maximizing the
//! summed values subject to per-resource capacities.
//!
//! Ties are broken toward the lexicographically smallest allocation
//! (agent-major, candidate-index-minor), in both the branch-and-bound solver
//! and the exhaustive oracle.

use crate::error::{Error, Result};
use crate::types::{validate_candidate_set, CandidateSet, JointAllocation, ResourceCapacities};

/// Joint-action count above which `solve_exhaustive` refuses to run.
pub const EXHAUSTIVE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem<'a> {
    /// `values[i][j]` scores candidate `j` of agent `i`.
    pub values: &'a [Vec<f64>],
    pub candidates: &'a CandidateSet,
    pub capacities: &'a ResourceCapacities,
}

impl<'a> AllocationProblem<'a> {
    pub fn new(
        values: &'a [Vec<f64>],
        candidates: &'a CandidateSet,
        capacities: &'a ResourceCapacities,
    ) -> Self {
        Self { values, candidates, capacities }
    }

    fn validate(&self) -> Result<()> {
        validate_candidate_set(self.candidates, self.capacities)?;
        if self.values.len() != self.candidates.n_agents() {
            return Err(Error::DimensionMismatch(format!(
                "{} value lists for {} agents",
                self.values.len(),
                self.candidates.n_agents()
            )));
        }
        for (i, (v, c)) in self.values.iter().zip(&self.candidates.per_agent).enumerate() {
            if v.len() != c.len() {
                return Err(Error::DimensionMismatch(format!(
                    "agent {i}: {} values for {} candidates",
                    v.len(),
                    c.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidValue(format!("agent {i}: non-finite value")));
            }
        }
        Ok(())
    }

    /// Sum of chosen values, accumulated in agent order.
    pub fn objective_of(&self, chosen: &[usize]) -> f64 {
        chosen
            .iter()
            .enumerate()
            .fold(0.0, |acc, (i, &j)| acc + self.values[i][j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub allocation: JointAllocation,
    pub objective: f64,
}

/// Depth-first branch-and-bound over agents in index order.
pub fn solve(p: &AllocationProblem<'_>) -> Result<AllocationResult> {
    p.validate()?;
    let n = p.candidates.n_agents();
    let k = p.capacities.len();

    // Candidates of each agent sorted by descending value, index breaks ties.
    let order: Vec<Vec<usize>> = p
        .values
        .iter()
        .map(|v| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
            idx
        })
        .collect();

    // suffix_max[d] = sum of the best value of agents d..n (ignores capacities).
    let mut suffix_max = vec![0.0; n + 1];
    for d in (0..n).rev() {
        let best = p.values[d].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        suffix_max[d] = suffix_max[d + 1] + best;
    }
    let scale = p
        .values
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        * (n as f64 + 1.0);
    let slack = 1e-9 * (scale + 1.0);

    let mut search = Search {
        p,
        order: &order,
        suffix_max: &suffix_max,
        slack,
        usage: vec![0.0; k],
        current: Vec::with_capacity(n),
        best: None,
    };
    search.dfs(0, 0.0);

    let (chosen, objective) = search
        .best
        .ok_or_else(|| Error::Infeasible("no feasible allocation found".into()))?;
    Ok(AllocationResult { allocation: JointAllocation::new(chosen), objective })
}

struct Search<'p, 'a> {
    p: &'p AllocationProblem<'a>,
    order: &'p [Vec<usize>],
    suffix_max: &'p [f64],
    slack: f64,
    usage: Vec<f64>,
    current: Vec<usize>,
    best: Option<(Vec<usize>, f64)>,
}

impl Search<'_, '_> {
    fn dfs(&mut self, depth: usize, partial: f64) {
        let n = self.order.len();
        if let Some((best, best_obj)) = &self.best {
            // Float slack keeps the capacity-free bound admissible under rounding.
            let bound = partial + self.suffix_max[depth];
            if bound + self.slack < *best_obj {
                return;
            }
            // A lexicographically larger prefix loses every tie, so it must strictly win.
            if self.current.as_slice() > &best[..depth] && bound + self.slack <= *best_obj {
                return;
            }
        }
        if depth == n {
            let obj = self.p.objective_of(&self.current);
            let replace = match &self.best {
                None => true,
                Some((best, best_obj)) => {
                    obj > *best_obj || (obj == *best_obj && self.current < *best)
                }
            };
            if replace {
                self.best = Some((self.current.clone(), obj));
            }
            return;
        }
        let cands = &self.p.candidates.per_agent[depth];
        for &j in &self.order[depth] {
            let cons = &cands[j].consumption;
            if !fits(&self.usage, cons, &self.p.capacities.0) {
                continue;
            }
            for (u, c) in self.usage.iter_mut().zip(cons) {
                *u += c;
            }
            self.current.push(j);
            self.dfs(depth + 1, partial + self.p.values[depth][j]);
            self.current.pop();
            for (u, c) in self.usage.iter_mut().zip(cons) {
                *u -= c;
            }
        }
    }
}

fn fits(usage: &[f64], cons: &[f64], caps: &[f64]) -> bool {
    usage.iter().zip(cons).zip(caps).all(|((u, c), cap)| u + c <= *cap)
}

/// Enumerates every joint action; the reference oracle for `solve`.
pub fn solve_exhaustive(p: &AllocationProblem<'_>) -> Result<AllocationResult> {
    p.validate()?;
    let size = p.candidates.joint_size();
    if size > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge(size));
    }
    let n = p.candidates.n_agents();
    let lens: Vec<usize> = p.candidates.per_agent.iter().map(Vec::len).collect();
    let mut chosen = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        if is_feasible(p, &chosen) {
            let obj = p.objective_of(&chosen);
            // Enumeration runs in lexicographic order, so ties keep the first.
            if best.as_ref().map_or(true, |(_, b)| obj > *b) {
                best = Some((chosen.clone(), obj));
            }
        }
        // Odometer increment, last agent fastest.
        let mut d = n;
        loop {
            if d == 0 {
                let (chosen, objective) =
                    best.ok_or_else(|| Error::Infeasible("no feasible allocation".into()))?;
                return Ok(AllocationResult { allocation: JointAllocation::new(chosen), objective });
            }
            d -= 1;
            chosen[d] += 1;
            if chosen[d] < lens[d] {
                break;
            }
            chosen[d] = 0;
        }
    }
}

fn is_feasible(p: &AllocationProblem<'_>, chosen: &[usize]) -> bool {
    let k = p.capacities.len();
    let mut usage = vec![0.0; k];
    for (i, &j) in chosen.iter().enumerate() {
        for (u, c) in usage.iter_mut().zip(&p.candidates.per_agent[i][j].consumption) {
            *u += c;
        }
    }
    usage.iter().zip(&p.capacities.0).all(|(u, cap)| u <= cap)
}

/// True iff `a` picks exactly one valid candidate per agent and respects capacities.
pub fn verify_feasible(p: &AllocationProblem<'_>, a: &JointAllocation) -> bool {
    let cs = &p.candidates.per_agent;
    if a.chosen.len() != cs.len() {
        return false;
    }
    let k = p.capacities.len();
    for (list, &j) in cs.iter().zip(&a.chosen) {
        if j >= list.len() || list[j].consumption.len() != k {
            return false;
        }
    }
    is_feasible(p, &a.chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CandidateAction;

    fn claim_set(consumptions: &[&[&[f64]]]) -> CandidateSet {
        // Candidate 0 of each agent is null; the rest consume as given.
        CandidateSet::new(
            consumptions
                .iter()
                .map(|agent| {
                    let k = agent.first().map_or(0, |c| c.len());
                    agent
                        .iter()
                        .enumerate()
                        .map(|(j, c)| {
                            if j == 0 {
                                CandidateAction::null(0, vec![], k)
                            } else {
                                CandidateAction::consuming(j, vec![], c.to_vec())
                            }
                        })
                        .collect()
                })
                .collect(),
        )
    }

    #[test]
    fn two_agents_one_unit() {
        let cs = claim_set(&[&[&[0.0], &[1.0]], &[&[0.0], &[1.0]]]);
        let caps = ResourceCapacities(vec![1.0]);
        let values = vec![vec![0.0, 5.0], vec![0.0, 4.0]];
        let p = AllocationProblem::new(&values, &cs, &caps);
        for r in [solve(&p).unwrap(), solve_exhaustive(&p).unwrap()] {
            assert_eq!(r.allocation.chosen, vec![1, 0]);
            assert_eq!(r.objective, 5.0);
        }
    }

    #[test]
    fn all_null() {
        let cs = claim_set(&[&[&[0.0]], &[&[0.0]], &[&[0.0]]]);
        let caps = ResourceCapacities(vec![0.0]);
        let values = vec![vec![0.0]; 3];
        let p = AllocationProblem::new(&values, &cs, &caps);
        let r = solve(&p).unwrap();
        assert_eq!(r.allocation.chosen, vec![0, 0, 0]);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn three_agents_two_resources() {
        // a1: null, r1, r2; a2: null, r1; a3: null, r2.
        let cs = claim_set(&[
            &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]],
            &[&[0.0, 0.0], &[1.0, 0.0]],
            &[&[0.0, 0.0], &[0.0, 1.0]],
        ]);
        let caps = ResourceCapacities(vec![1.0, 1.0]);
        let values = vec![vec![0.0, 3.0, 2.0], vec![0.0, 3.0], vec![0.0, 1.0]];
        let p = AllocationProblem::new(&values, &cs, &caps);
        for r in [solve(&p).unwrap(), solve_exhaustive(&p).unwrap()] {
            assert_eq!(r.allocation.chosen, vec![2, 1, 0]);
            assert_eq!(r.objective, 5.0);
        }
    }

    #[test]
    fn negative_value_prefers_null() {
        let cs = claim_set(&[&[&[0.0], &[1.0]]]);
        let caps = ResourceCapacities(vec![1.0]);
        let values = vec![vec![0.0, -2.0]];
        let p = AllocationProblem::new(&values, &cs, &caps);
        assert_eq!(solve_exhaustive(&p).unwrap().allocation.chosen, vec![0]);
        assert_eq!(solve(&p).unwrap().allocation.chosen, vec![0]);
    }

    #[test]
    fn ties_go_lexicographic() {
        // Either agent may take the unit; both worth 1.
        let cs = claim_set(&[&[&[0.0], &[1.0]], &[&[0.0], &[1.0]]]);
        let caps = ResourceCapacities(vec![1.0]);
        let values = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let p = AllocationProblem::new(&values, &cs, &caps);
        // [0,1] < [1,0] lexicographically.
        assert_eq!(solve_exhaustive(&p).unwrap().allocation.chosen, vec![0, 1]);
        assert_eq!(solve(&p).unwrap().allocation.chosen, vec![0, 1]);

        let values = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let p = AllocationProblem::new(&values, &cs, &caps);
        assert_eq!(solve(&p).unwrap().allocation.chosen, vec![0, 0]);
    }

    #[test]
    fn feasibility_checks() {
        let cs = claim_set(&[&[&[0.0], &[1.0]], &[&[0.0], &[1.0]]]);
        let caps = ResourceCapacities(vec![1.0]);
        let values = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let p = AllocationProblem::new(&values, &cs, &caps);
        assert!(verify_feasible(&p, &JointAllocation::new(vec![0, 0])));
        assert!(!verify_feasible(&p, &JointAllocation::new(vec![1, 1])));
        assert!(!verify_feasible(&p, &JointAllocation::new(vec![0])));
        assert!(!verify_feasible(&p, &JointAllocation::new(vec![0, 7])));
    }

    #[test]
    fn shape_errors() {
        let cs = claim_set(&[&[&[0.0], &[1.0]]]);
        let caps = ResourceCapacities(vec![1.0]);
        let values = vec![vec![0.0]];
        assert!(solve(&AllocationProblem::new(&values, &cs, &caps)).is_err());
        let values = vec![vec![0.0, 1.0], vec![0.0]];
        assert!(solve(&AllocationProblem::new(&values, &cs, &caps)).is_err());
    }

    #[test]
    fn exhaustive_guard() {
        let cs = CandidateSet::new(
            (0..8)
                .map(|_| (0..10).map(|j| CandidateAction::null(j, vec![], 0)).collect())
                .collect(),
        );
        let caps = ResourceCapacities(vec![]);
        let values = vec![vec![0.0; 10]; 8];
        let p = AllocationProblem::new(&values, &cs, &caps);
        assert!(matches!(solve_exhaustive(&p), Err(Error::TooLarge(_))));
        assert!(solve(&p).is_ok());
    }
}

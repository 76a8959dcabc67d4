//! One indivisible resource per step; agent `i` values it at `step * (i + 1)`.

use super::{one_hot, push_fairness, ActionTable, EnvParams, FeatureCtx};
use crate::error::Result;
use crate::types::{CandidateSet, JointAllocation, ResourceCapacities};

const N: usize = 5;
pub(super) const LOCAL_DIM: usize = N + 2;

#[derive(Debug, Clone, PartialEq)]
pub struct BiasedDmState {
    pub allocations: Vec<u64>,
}

impl BiasedDmState {
    pub(super) fn reset(n: usize) -> Self {
        Self { allocations: vec![0; n] }
    }

    fn table(&self) -> ActionTable<bool> {
        let actions = (0..self.allocations.len())
            .map(|_| vec![(false, vec![0.0], true), (true, vec![1.0], false)])
            .collect();
        ActionTable { actions, caps: vec![1.0] }
    }

    pub(super) fn candidates(&self, ctx: &FeatureCtx) -> (CandidateSet, ResourceCapacities) {
        self.table().into_candidates(|i, &claim| {
            let d = if claim { 1.0 } else { 0.0 };
            let mut f = one_hot(N, i);
            f.push(d);
            f.push(ctx.tracker.peek_agent(i, d) * ctx.scale);
            push_fairness(&mut f, ctx.tracker, i, ctx.scale);
            f
        })
    }

    pub(super) fn step(&mut self, p: &EnvParams, alloc: &JointAllocation) -> Result<(Vec<f64>, Vec<f64>)> {
        let table = self.table();
        table.check(alloc)?;
        let n = self.allocations.len();
        let mut utility = vec![0.0; n];
        let mut payoff = vec![0.0; n];
        for (i, &j) in alloc.chosen.iter().enumerate() {
            if table.actions[i][j].0 {
                utility[i] = p.biaseddm_utility_step * (i + 1) as f64;
                payoff[i] = 1.0;
                self.allocations[i] += 1;
            }
        }
        Ok((utility, payoff))
    }
}

//! A single job that one agent at a time may hold. The holder chooses each
//! step whether to keep it; while held, nobody else can claim it.

use super::{push_fairness, ActionTable, FeatureCtx};
use crate::error::Result;
use crate::types::{CandidateSet, JointAllocation, ResourceCapacities};

pub(super) const LOCAL_DIM: usize = 5;
const N: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    Idle,
    Occupy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobAllocState {
    pub occupant: Option<usize>,
}

impl JobAllocState {
    pub(super) fn reset() -> Self {
        Self { occupant: None }
    }

    fn table(&self) -> ActionTable<Act> {
        let actions = (0..N)
            .map(|i| {
                let idle = (Act::Idle, vec![0.0], true);
                let occupy = (Act::Occupy, vec![1.0], false);
                match self.occupant {
                    None => vec![idle, occupy],
                    Some(j) if j == i => vec![idle, occupy],
                    Some(_) => vec![idle],
                }
            })
            .collect();
        ActionTable { actions, caps: vec![1.0] }
    }

    pub(super) fn candidates(&self, ctx: &FeatureCtx) -> (CandidateSet, ResourceCapacities) {
        self.table().into_candidates(|i, &a| {
            let d = if a == Act::Occupy { 1.0 } else { 0.0 };
            let mut f = vec![
                d,
                if self.occupant == Some(i) { 1.0 } else { 0.0 },
                if self.occupant.is_none() { 1.0 } else { 0.0 },
                ctx.time_left,
                (ctx.tracker.peek_agent(i, d) - ctx.tracker.mean()) * ctx.scale,
            ];
            push_fairness(&mut f, ctx.tracker, i, ctx.scale);
            f
        })
    }

    pub(super) fn step(&mut self, alloc: &JointAllocation) -> Result<(Vec<f64>, Vec<f64>)> {
        let table = self.table();
        table.check(alloc)?;
        let mut reward = vec![0.0; N];
        self.occupant = None;
        for (i, &j) in alloc.chosen.iter().enumerate() {
            if table.actions[i][j].0 == Act::Occupy {
                self.occupant = Some(i);
                reward[i] = 1.0;
            }
        }
        Ok((reward.clone(), reward))
    }
}

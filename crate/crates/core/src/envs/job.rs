//! Grid world with one job cell in the middle. Whoever stands on it earns 1
//! per step. Each grid cell is a unit-capacity resource, so two agents can
//! never share a cell.

use super::{push_fairness, ActionTable, EnvParams, FeatureCtx};
use crate::error::Result;
use crate::types::{CandidateSet, JointAllocation, ResourceCapacities};

pub(super) const LOCAL_DIM: usize = 11;
/// Start cells in agent order, as fractions of the far edge.
pub const JOB_CORNERS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
const MOVES: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

#[derive(Debug, Clone, PartialEq)]
pub struct JobState {
    pub positions: Vec<(usize, usize)>,
    pub job: (usize, usize),
}

fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

impl JobState {
    pub(super) fn reset(p: &EnvParams) -> Self {
        let e = p.job_grid - 1;
        Self {
            positions: JOB_CORNERS.iter().map(|&(x, y)| (x * e, y * e)).collect(),
            job: (p.job_grid / 2, p.job_grid / 2),
        }
    }

    fn table(&self, p: &EnvParams) -> ActionTable<(usize, usize)> {
        let g = p.job_grid;
        let mut caps = vec![1.0; g * g];
        for &(x, y) in &self.positions {
            caps[y * g + x] = 0.0;
        }
        let actions = self
            .positions
            .iter()
            .map(|&(x, y)| {
                let mut list = vec![((x, y), vec![0.0; g * g], true)];
                for (dx, dy) in MOVES {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= g as i64 || ny >= g as i64 {
                        continue;
                    }
                    let cell = ny as usize * g + nx as usize;
                    if caps[cell] == 0.0 {
                        continue;
                    }
                    let mut cons = vec![0.0; g * g];
                    cons[cell] = 1.0;
                    list.push(((nx as usize, ny as usize), cons, false));
                }
                list
            })
            .collect();
        ActionTable { actions, caps }
    }

    pub(super) fn candidates(&self, p: &EnvParams, ctx: &FeatureCtx) -> (CandidateSet, ResourceCapacities) {
        let half = (p.job_grid / 2).max(1) as f64;
        let span = (p.job_grid - 1).max(1) as f64;
        self.table(p).into_candidates(|i, &pos| {
            let rel = |a: usize, b: usize| a as f64 - b as f64;
            let mut f = vec![
                rel(pos.0, self.job.0) / half,
                rel(pos.1, self.job.1) / half,
                if pos == self.job { 1.0 } else { 0.0 },
                manhattan(pos, self.job) as f64 / span,
            ];
            for (k, &o) in self.positions.iter().enumerate() {
                if k != i {
                    f.push(rel(o.0, pos.0) / span);
                    f.push(rel(o.1, pos.1) / span);
                }
            }
            f.push(ctx.time_left);
            push_fairness(&mut f, ctx.tracker, i, ctx.scale);
            f
        })
    }

    pub(super) fn step(&mut self, p: &EnvParams, alloc: &JointAllocation) -> Result<(Vec<f64>, Vec<f64>)> {
        let table = self.table(p);
        table.check(alloc)?;
        for (i, &j) in alloc.chosen.iter().enumerate() {
            self.positions[i] = table.actions[i][j].0;
        }
        let r: Vec<f64> = self.positions.iter().map(|&q| if q == self.job { 1.0 } else { 0.0 }).collect();
        Ok((r.clone(), r))
    }

    /// Distance-to-job penalty per agent for the current positions.
    pub(super) fn shaping_penalties(&self, p: &EnvParams) -> Vec<f64> {
        self.positions
            .iter()
            .map(|&q| -p.job_shaping_weight * manhattan(q, self.job) as f64 / p.job_grid as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use crate::envs::{Env, EnvKind, EnvSpec, World};
    use crate::fairness::init_tracker;
    use crate::types::JointAllocation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(env: &Env) -> &super::JobState {
        match &env.state.world {
            World::Job(s) => s,
            _ => unreachable!(),
        }
    }

    #[test]
    fn reset_layout() {
        let env = Env::reset(&EnvSpec::new(EnvKind::Job), 0);
        let s = state(&env);
        assert_eq!(s.positions, vec![(0, 0), (0, 6), (6, 0), (6, 6)]);
        assert_eq!(s.job, (3, 3));
        assert_eq!(s.positions.len(), super::JOB_CORNERS.len());
    }

    #[test]
    fn corner_moves_and_reward() {
        let spec = EnvSpec::new(EnvKind::Job);
        let mut env = Env::reset(&spec, 0);
        let tr = init_tracker(spec.kind.tracker_mode(), 4, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (cs, _) = env.candidates(&tr);
        // Each corner agent has stay plus two inward moves.
        assert!(cs.per_agent.iter().all(|l| l.len() == 3));
        // Candidate order is stay, +x, -x, +y, -y with off-grid moves dropped.
        for _ in 0..3 {
            env.step(&JointAllocation::new(vec![1, 0, 0, 0])).unwrap();
        }
        for _ in 0..2 {
            let o = env.step(&JointAllocation::new(vec![3, 0, 0, 0])).unwrap();
            assert_eq!(o.rewards.utility[0], 0.0);
        }
        let o = env.step(&JointAllocation::new(vec![3, 0, 0, 0])).unwrap();
        assert_eq!(o.rewards.utility, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(state(&env).positions[0], (3, 3));
        // Staying keeps earning.
        let o = env.step(&JointAllocation::new(vec![0, 0, 0, 0])).unwrap();
        assert_eq!(o.rewards.payoff_delta, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn shaping_touches_utility_only() {
        let spec = EnvSpec::new(EnvKind::Job).with_shaping(true);
        let mut env = Env::reset(&spec, 0);
        let o = env.step(&JointAllocation::new(vec![0, 0, 0, 0])).unwrap();
        assert!(o.rewards.utility.iter().all(|&u| u < 0.0));
        assert_eq!(o.task_utility, vec![0.0; 4]);
        assert_eq!(o.rewards.payoff_delta, vec![0.0; 4]);
    }
}

//! Agents of different sizes race for respawning resources in the unit
//! square. Speed is proportional to size and every collection grows the
//! collector, so early advantages compound.
//!
//! Once an agent is allocated a resource it commits to it: the resource is
//! reserved for it and it travels there at its current speed, arriving after
//! `ceil(distance / speed)` steps counted from the allocation step. Idle
//! agents drift in a uniformly random direction.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{one_hot, push_fairness, ActionTable, EnvParams, FeatureCtx};
use crate::error::Result;
use crate::types::{CandidateSet, JointAllocation, ResourceCapacities};

pub(super) const LOCAL_DIM: usize = 6;
const ETA_SCALE: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Act {
    Wander,
    Claim(usize),
    Continue(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatthewState {
    pub positions: Vec<[f64; 2]>,
    pub sizes: Vec<f64>,
    pub targets: Vec<Option<usize>>,
    pub resources: Vec<[f64; 2]>,
    pub reserved: Vec<Option<usize>>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn uniform_point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.gen::<f64>(), rng.gen::<f64>()]
}

impl MatthewState {
    pub(super) fn reset(p: &EnvParams, n: usize, rng: &mut ChaCha8Rng) -> Self {
        let positions = (0..n).map(|_| uniform_point(rng)).collect();
        let resources = (0..p.matthew_n_resources).map(|_| uniform_point(rng)).collect();
        let mut sizes = vec![p.matthew_normal_size; n];
        for i in sample(rng, n, p.matthew_n_advantaged.min(n)) {
            sizes[i] = p.matthew_advantaged_size;
        }
        Self {
            positions,
            sizes,
            targets: vec![None; n],
            resources,
            reserved: vec![None; p.matthew_n_resources],
        }
    }

    fn speed(&self, p: &EnvParams, i: usize) -> f64 {
        p.matthew_speed_factor * self.sizes[i]
    }

    fn table(&self) -> ActionTable<Act> {
        let k = self.resources.len();
        let caps = self.reserved.iter().map(|r| if r.is_some() { 0.0 } else { 1.0 }).collect();
        let actions = self
            .targets
            .iter()
            .map(|t| match *t {
                Some(r) => vec![(Act::Continue(r), vec![0.0; k], true)],
                None => {
                    let mut list = vec![(Act::Wander, vec![0.0; k], true)];
                    for r in (0..k).filter(|&r| self.reserved[r].is_none()) {
                        list.push((Act::Claim(r), one_hot(k, r), false));
                    }
                    list
                }
            })
            .collect();
        ActionTable { actions, caps }
    }

    pub(super) fn candidates(&self, p: &EnvParams, ctx: &FeatureCtx) -> (CandidateSet, ResourceCapacities) {
        self.table().into_candidates(|i, &a| {
            let pos = self.positions[i];
            let (has, d) = match a {
                Act::Wander => (0.0, 0.0),
                Act::Claim(r) | Act::Continue(r) => (1.0, dist(pos, self.resources[r])),
            };
            let eta = (d / self.speed(p, i)).ceil();
            let mut f = vec![has, d, eta / ETA_SCALE, self.sizes[i] / p.matthew_size_cap, pos[0], pos[1]];
            push_fairness(&mut f, ctx.tracker, i, ctx.scale);
            f
        })
    }

    pub(super) fn step(
        &mut self,
        p: &EnvParams,
        alloc: &JointAllocation,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let table = self.table();
        table.check(alloc)?;
        for (i, &j) in alloc.chosen.iter().enumerate() {
            if let Act::Claim(r) = table.actions[i][j].0 {
                self.targets[i] = Some(r);
                self.reserved[r] = Some(i);
            }
        }
        let n = self.positions.len();
        let mut reward = vec![0.0; n];
        for i in 0..n {
            let v = self.speed(p, i);
            match self.targets[i] {
                Some(r) => {
                    let goal = self.resources[r];
                    let d = dist(self.positions[i], goal);
                    if d <= v {
                        self.positions[i] = goal;
                        reward[i] = 1.0;
                        self.sizes[i] = (self.sizes[i] + p.matthew_growth).min(p.matthew_size_cap);
                        self.targets[i] = None;
                        self.reserved[r] = None;
                        self.resources[r] = uniform_point(rng);
                    } else {
                        let pos = &mut self.positions[i];
                        pos[0] += (goal[0] - pos[0]) / d * v;
                        pos[1] += (goal[1] - pos[1]) / d * v;
                    }
                }
                None => {
                    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                    let pos = &mut self.positions[i];
                    pos[0] = (pos[0] + v * theta.cos()).clamp(0.0, 1.0);
                    pos[1] = (pos[1] + v * theta.sin()).clamp(0.0, 1.0);
                }
            }
        }
        Ok((reward.clone(), reward))
    }
}

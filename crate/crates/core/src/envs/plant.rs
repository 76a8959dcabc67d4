//! Agents gather typed resources on a grid and turn them into units. Each
//! agent needs its own mix of the three types per unit; collected resources
//! respawn on a free cell. Allocated agents walk the shortest free path to
//! their resource, one cell per step, waiting when blocked.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{one_hot, push_fairness, ActionTable, EnvParams, FeatureCtx};
use crate::error::Result;
use crate::types::{CandidateSet, JointAllocation, ResourceCapacities};

pub(super) const LOCAL_DIM: usize = 13;
pub(super) const N_RESOURCES: usize = 8;
const N_TYPES: usize = 3;
/// Per-unit requirement of each resource type, by agent.
pub const PLANT_REQUIREMENTS: [[u32; N_TYPES]; 5] = [[2, 1, 0], [1, 0, 1], [1, 0, 0], [1, 3, 0], [0, 1, 2]];
const RESOURCE_TYPES: [usize; N_RESOURCES] = [0, 0, 0, 1, 1, 1, 2, 2];
const NEIGHBORS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Act {
    Stay,
    Claim(usize),
    Continue(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub positions: Vec<Cell>,
    pub resources: Vec<Cell>,
    pub resource_types: Vec<usize>,
    pub reserved: Vec<Option<usize>>,
    pub targets: Vec<Option<usize>>,
    pub inventory: Vec<[u32; N_TYPES]>,
    pub requirements: Vec<[u32; N_TYPES]>,
}

fn random_free_cell(grid: usize, taken: &[Cell], rng: &mut ChaCha8Rng) -> Cell {
    loop {
        let c = (rng.gen_range(0..grid), rng.gen_range(0..grid));
        if !taken.contains(&c) {
            return c;
        }
    }
}

impl PlantState {
    pub(super) fn reset(p: &EnvParams, n: usize, rng: &mut ChaCha8Rng) -> Self {
        let g = p.plant_grid;
        let mut taken = Vec::new();
        for _ in 0..n + N_RESOURCES {
            let c = random_free_cell(g, &taken, rng);
            taken.push(c);
        }
        let requirements = (0..n).map(|i| PLANT_REQUIREMENTS[i % PLANT_REQUIREMENTS.len()]).collect();
        Self {
            positions: taken[..n].to_vec(),
            resources: taken[n..].to_vec(),
            resource_types: RESOURCE_TYPES.to_vec(),
            reserved: vec![None; N_RESOURCES],
            targets: vec![None; n],
            inventory: vec![[0; N_TYPES]; n],
            requirements,
        }
    }

    fn need(&self, i: usize) -> [u32; N_TYPES] {
        std::array::from_fn(|t| self.requirements[i][t].saturating_sub(self.inventory[i][t]))
    }

    fn table(&self) -> ActionTable<Act> {
        let caps = self.reserved.iter().map(|r| if r.is_some() { 0.0 } else { 1.0 }).collect();
        let actions = (0..self.positions.len())
            .map(|i| match self.targets[i] {
                Some(r) => vec![(Act::Continue(r), vec![0.0; N_RESOURCES], true)],
                None => {
                    let mut list = vec![(Act::Stay, vec![0.0; N_RESOURCES], true)];
                    for r in 0..N_RESOURCES {
                        let blocked = self
                            .positions
                            .iter()
                            .enumerate()
                            .any(|(k, &q)| k != i && q == self.resources[r]);
                        if self.reserved[r].is_none() && !blocked {
                            list.push((Act::Claim(r), one_hot(N_RESOURCES, r), false));
                        }
                    }
                    list
                }
            })
            .collect();
        ActionTable { actions, caps }
    }

    pub(super) fn candidates(&self, p: &EnvParams, ctx: &FeatureCtx) -> (CandidateSet, ResourceCapacities) {
        let e = (p.plant_grid - 1).max(1) as f64;
        self.table().into_candidates(|i, &a| {
            let (x, y) = self.positions[i];
            let need = self.need(i);
            let mut f = match a {
                Act::Stay => vec![0.0; 8],
                Act::Claim(r) | Act::Continue(r) => {
                    let (rx, ry) = self.resources[r];
                    let t = self.resource_types[r];
                    let mut v = vec![
                        1.0,
                        (rx as f64 - x as f64) / e,
                        (ry as f64 - y as f64) / e,
                        (rx.abs_diff(x) + ry.abs_diff(y)) as f64 / (2.0 * e),
                    ];
                    v.extend(one_hot(N_TYPES, t));
                    v.push(if need[t] > 0 { 1.0 } else { 0.0 });
                    v
                }
            };
            f.extend(need.iter().map(|&q| q as f64 / 3.0));
            f.push(x as f64 / e);
            f.push(y as f64 / e);
            push_fairness(&mut f, ctx.tracker, i, ctx.scale);
            f
        })
    }

    /// First step of a shortest path from `from` to `to` that avoids the other
    /// agents, preferring x moves over y moves.
    fn next_cell(&self, grid: usize, agent: usize, from: Cell, to: Cell) -> Option<Cell> {
        let idx = |c: Cell| c.1 * grid + c.0;
        let blocked = |c: Cell| self.positions.iter().enumerate().any(|(k, &q)| k != agent && q == c);
        if blocked(to) {
            return None;
        }
        let mut dist = vec![usize::MAX; grid * grid];
        dist[idx(to)] = 0;
        let mut queue = VecDeque::from([to]);
        while let Some(c) = queue.pop_front() {
            if c == from {
                break;
            }
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (c.0 as i64 + dx, c.1 as i64 + dy);
                if nx < 0 || ny < 0 || nx >= grid as i64 || ny >= grid as i64 {
                    continue;
                }
                let nc = (nx as usize, ny as usize);
                if dist[idx(nc)] == usize::MAX && (nc == from || !blocked(nc)) {
                    dist[idx(nc)] = dist[idx(c)] + 1;
                    queue.push_back(nc);
                }
            }
        }
        let d = dist[idx(from)];
        if d == usize::MAX {
            return None;
        }
        NEIGHBORS.iter().find_map(|&(dx, dy)| {
            let (nx, ny) = (from.0 as i64 + dx, from.1 as i64 + dy);
            if nx < 0 || ny < 0 || nx >= grid as i64 || ny >= grid as i64 {
                return None;
            }
            let nc = (nx as usize, ny as usize);
            (dist[idx(nc)].wrapping_add(1) == d).then_some(nc)
        })
    }

    fn collect(&mut self, p: &EnvParams, i: usize, r: usize, rng: &mut ChaCha8Rng) -> f64 {
        let t = self.resource_types[r];
        if self.inventory[i][t] < self.requirements[i][t] {
            self.inventory[i][t] += 1;
        }
        self.targets[i] = None;
        self.reserved[r] = None;
        let taken: Vec<Cell> = self.positions.iter().chain(&self.resources).copied().collect();
        self.resources[r] = random_free_cell(p.plant_grid, &taken, rng);
        let req = self.requirements[i];
        if (0..N_TYPES).all(|t| self.inventory[i][t] >= req[t]) {
            for t in 0..N_TYPES {
                self.inventory[i][t] -= req[t];
            }
            1.0
        } else {
            0.0
        }
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
            let Some(r) = self.targets[i] else { continue };
            let goal = self.resources[r];
            if self.positions[i] != goal {
                if let Some(c) = self.next_cell(p.plant_grid, i, self.positions[i], goal) {
                    self.positions[i] = c;
                }
            }
            if self.positions[i] == goal {
                reward[i] = self.collect(p, i, r, rng);
            }
        }
        Ok((reward.clone(), reward))
    }
}

//! FIFO experience replay.
//!
//! Successor candidate sets are stored with sparse consumption vectors: in
//! the grid environments consumption is one-hot over dozens of cells, and a
//! dense copy per candidate would dominate memory at full buffer capacity.

use rand::Rng;

use crate::types::{CandidateAction, CandidateSet, Experience, RewardBundle};

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    cursor: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, evicting the oldest entry once full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let (new, old) = self.items.split_at(self.cursor);
        old.iter().chain(new)
    }

    /// `batch` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredAction {
    pub features: Vec<f64>,
    pub consumption: Vec<(usize, f64)>,
    pub is_null: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredCandidates {
    pub k: usize,
    pub capacities: Vec<f64>,
    pub per_agent: Vec<Vec<StoredAction>>,
}

impl StoredCandidates {
    pub fn from_set(cs: &CandidateSet, capacities: &[f64]) -> Self {
        let per_agent = cs
            .per_agent
            .iter()
            .map(|list| {
                list.iter()
                    .map(|c| StoredAction {
                        features: c.features.clone(),
                        consumption: c
                            .consumption
                            .iter()
                            .enumerate()
                            .filter(|(_, v)| **v != 0.0)
                            .map(|(k, v)| (k, *v))
                            .collect(),
                        is_null: c.is_null,
                    })
                    .collect()
            })
            .collect();
        Self { k: capacities.len(), capacities: capacities.to_vec(), per_agent }
    }

    pub fn to_candidate_set(&self) -> CandidateSet {
        let per_agent = self
            .per_agent
            .iter()
            .map(|list| {
                list.iter()
                    .enumerate()
                    .map(|(j, a)| {
                        let mut consumption = vec![0.0; self.k];
                        for &(k, v) in &a.consumption {
                            consumption[k] = v;
                        }
                        CandidateAction { action_id: j, features: a.features.clone(), consumption, is_null: a.is_null }
                    })
                    .collect()
            })
            .collect();
        CandidateSet::new(per_agent)
    }
}

/// Replay entry: an [`Experience`] with compactly stored successor candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub chosen_features: Vec<Vec<f64>>,
    pub rewards: RewardBundle,
    pub successor: StoredCandidates,
    pub done: bool,
}

impl From<Experience> for Transition {
    fn from(e: Experience) -> Self {
        Self {
            successor: StoredCandidates::from_set(&e.successor_candidates, &e.successor_capacities.0),
            chosen_features: e.chosen_features,
            rewards: e.rewards,
            done: e.done,
        }
    }
}

//! Fair multi-agent resource allocation.
//!
//! Agents score their own candidate actions with small value networks; a
//! central allocator picks the feasible joint action with the highest total
//! score. Utility and fairness estimates are learned with double Q-learning
//! and blended by a trade-off weight `beta`.

pub mod allocator;
pub mod envs;
pub mod experiment;
pub mod error;
pub mod fairness;
pub mod learner;
pub mod types;
pub mod valuenet;

pub use error::{Error, Result};

//! Offline reinforcement learning at desk scale: linear fitted Q-iteration
//! and minimax Bellman-residual estimation on seeded synthetic MDPs, exact
//! tabular solvers, margin-condition analysis, closed-form rate-bound
//! evaluators, and deterministic replication sweeps with log-log slope fits.

pub mod benchmark;
pub mod bounds;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod fqi;
pub mod kv;
pub mod linalg;
pub mod margin;
pub mod mdp;
pub mod msbo;
pub mod rng;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};

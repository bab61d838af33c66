//! Representation learning with UCB-driven planning for multi-player
//! general-sum Markov games with low-rank, block, or factored structure.
//!
//! The crate is organised bottom-up:
//!
//! * [`game`] holds the ground-truth games, the block-emission simulator,
//!   and exact dynamic-programming evaluation (values, best responses,
//!   swap deviations, exploitability).
//! * [`envs`] generates seeded tabular, block, and factored environments
//!   together with their finite candidate classes.
//! * [`equilibrium`] solves normal-form stage games (zero-sum NE, CCE, CE)
//!   by no-regret dynamics and certifies them by exact deviation gaps.
//! * [`replearn`] selects features from finite classes: maximum likelihood
//!   for the model-based variant, the min-max-min ridge objective for the
//!   model-free one, and per-factor likelihood for factored games.
//! * [`planner`] computes elliptical bonuses, optimistic and pessimistic
//!   value recursions, and the optimality gap.
//! * [`meta`] runs the outer episode loops and returns the minimum-gap policy.
//! * [`harness`] drives seeded experiments and writes metrics to disk.

pub mod envs;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod harness;
pub mod io;
pub mod meta;
pub mod planner;
pub mod replearn;
pub mod rng;
pub mod space;
pub mod tol;

pub use equilibrium::Concept;
pub use error::{GerlError, Result};
pub use space::ActionSpace;

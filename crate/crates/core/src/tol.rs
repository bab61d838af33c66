//! Numerical tolerances shared by every module.

/// Row sums of transition kernels and initial distributions.
pub const SIMPLEX: f64 = 1e-12;

/// Equalities checked between dynamic-programming quantities.
pub const DP: f64 = 1e-9;

/// Stored policy conditionals must sum to one within this.
pub const POLICY_SUM: f64 = 1e-9;

/// Zero-sum check for stage games.
pub const ZERO_SUM: f64 = 1e-12;

/// Default target deviation gap of the stage-game oracles.
pub const STAGE_EPS: f64 = 1e-3;

/// Default iteration budget of the stage-game oracles.
pub const STAGE_MAX_ITERS: usize = 1_000_000;

/// Largest joint state space the factored planner enumerates.
pub const JOINT_STATE_CAP: usize = 4096;

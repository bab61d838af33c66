//! Elliptical bonuses, optimistic and pessimistic planning, and the
//! optimality gap.

mod lsvi;
mod mb;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

pub use lsvi::{lsvi_plan, LsviInputs, LsviPlan, LsviPolicy, OneHotStep};
pub use mb::{mb_plan, PlanResult, PlanningModel};

use crate::equilibrium::{solve, Concept, SolverConfig, StageGame};
use crate::error::{GerlError, Result};
use crate::game::{BlockEnv, Observation};
use crate::replearn::{Decoder, Feature};
use crate::space::ActionSpace;

/// `Sigma = sum phi phi^T + lambda I` with a lazily factorised inverse.
#[derive(Debug, Clone)]
pub struct Covariance {
    dim: usize,
    lambda: f64,
    matrix: DMatrix<f64>,
    count: usize,
    chol: OnceLock<Cholesky<f64, Dyn>>,
}

impl Covariance {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(GerlError::Singular { lambda });
        }
        Ok(Self {
            dim,
            lambda,
            matrix: DMatrix::identity(dim, dim) * lambda,
            count: 0,
            chol: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn add(&mut self, phi: &Feature) {
        for &(i, x) in &phi.entries {
            for &(j, y) in &phi.entries {
                self.matrix[(i, j)] += x * y;
            }
        }
        self.count += 1;
        self.chol.take();
    }

    fn factor(&self) -> Result<&Cholesky<f64, Dyn>> {
        if let Some(c) = self.chol.get() {
            return Ok(c);
        }
        let c = self
            .matrix
            .clone()
            .cholesky()
            .ok_or(GerlError::Singular { lambda: self.lambda })?;
        Ok(self.chol.get_or_init(|| c))
    }

    /// `Sigma^{-1} phi`.
    pub fn solve(&self, phi: &Feature) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(&phi.to_dense()).as_slice().to_vec())
    }

    pub fn solve_dense(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
    }

    /// `||phi||_{Sigma^{-1}}`.
    pub fn inv_norm(&self, phi: &Feature) -> Result<f64> {
        Ok(phi.dot(&self.solve(phi)?).max(0.0).sqrt())
    }
}

/// `min(alpha ||phi||_{Sigma^{-1}}, H)`.
pub fn bonus(phi: &Feature, cov: &Covariance, alpha: f64, horizon: usize) -> Result<f64> {
    Ok((alpha * cov.inv_norm(phi)?).min(horizon as f64))
}

/// Sum over players of the clipped per-player Kronecker-feature bonuses.
pub fn factored_bonus(phis: &[Feature], covs: &[Covariance], alpha: f64, horizon: usize) -> Result<f64> {
    if phis.len() != covs.len() {
        return Err(GerlError::Dimension("one covariance per player feature".into()));
    }
    phis.iter().zip(covs).map(|(p, c)| bonus(p, c, alpha, horizon)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mb,
    Mf,
    Factored,
}

impl FromStr for Variant {
    type Err = GerlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mb" => Ok(Self::Mb),
            "mf" => Ok(Self::Mf),
            "factored" => Ok(Self::Factored),
            other => Err(GerlError::Parse(format!("unknown variant `{other}` (expected mb, mf or factored)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mb => "mb",
            Self::Mf => "mf",
            Self::Factored => "factored",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    /// Sample-complexity forms of the bonus and slack times a
    /// tunable constant.
    Theory,
    /// Fixed bonus coefficient.
    Constant,
}

impl FromStr for ScheduleMode {
    type Err = GerlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "theory" => Ok(Self::Theory),
            "constant" => Ok(Self::Constant),
            other => Err(GerlError::Parse(format!("unknown schedule `{other}` (expected theory or constant)"))),
        }
    }
}

/// Bonus and gap-slack schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BonusParams {
    pub mode: ScheduleMode,
    pub c_alpha: f64,
    pub c_zeta: f64,
    /// Bonus coefficient in constant mode.
    pub beta: f64,
    /// Covariance regulariser.
    pub lambda: f64,
    /// Ridge regulariser of representation learning.
    pub replearn_lambda: f64,
    /// Failure probability inside the logarithms.
    pub delta: f64,
}

impl Default for BonusParams {
    fn default() -> Self {
        Self {
            mode: ScheduleMode::Constant,
            c_alpha: 1.0,
            c_zeta: 1.0,
            beta: 0.1,
            lambda: 1.0,
            replearn_lambda: 0.01,
            delta: 0.1,
        }
    }
}

/// Problem sizes entering the schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleInputs {
    pub variant: Variant,
    pub horizon: usize,
    /// Feature dimension (per factor in factored games).
    pub dim: usize,
    /// Joint action count `A`.
    pub joint_actions: usize,
    /// Largest per-player action count.
    pub max_actions: usize,
    pub players: usize,
    /// Largest class size (`|M|` or `|Phi|`).
    pub class_size: usize,
    pub episodes: usize,
    /// Largest neighbourhood size.
    pub locality: usize,
}

impl BonusParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.c_alpha, self.c_zeta, self.lambda, self.replearn_lambda];
        if positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(GerlError::Config("bonus constants and regularisers must be positive, delta in (0, 1)".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(GerlError::Config("constant bonus coefficient must be nonnegative".into()));
        }
        Ok(())
    }

    fn log_term(&self, s: &ScheduleInputs) -> f64 {
        let (h, n, m) = (s.horizon as f64, s.episodes as f64, s.players as f64);
        let c = s.class_size.max(1) as f64;
        let arg = match s.variant {
            Variant::Mb => c * h * n / self.delta,
            Variant::Mf => s.dim as f64 * n * h * s.joint_actions as f64 * m * c / self.delta,
            Variant::Factored => c * h * n * m / self.delta,
        };
        arg.ln().max(1.0)
    }

    /// Bonus coefficient `alpha^(n)`.
    pub fn alpha(&self, s: &ScheduleInputs) -> f64 {
        if self.mode == ScheduleMode::Constant {
            return self.beta;
        }
        let (h, d, a, m) = (s.horizon as f64, s.dim as f64, s.joint_actions as f64, s.players as f64);
        let l = self.log_term(s);
        self.c_alpha
            * match s.variant {
                Variant::Mb => h * d * (a * l).sqrt(),
                Variant::Mf => h * a * d * (m * l).sqrt(),
                Variant::Factored => {
                    let big_l = s.locality as f64;
                    h * s.max_actions as f64 * d.powf(big_l) * (big_l * l).sqrt()
                }
            }
    }

    /// Slack schedule `zeta^(n)` (same form in both modes).
    pub fn zeta(&self, n: usize, s: &ScheduleInputs) -> f64 {
        let l = self.log_term(s);
        let n = n.max(1) as f64;
        self.c_zeta
            * match s.variant {
                Variant::Mb | Variant::Factored => l / n,
                Variant::Mf => (s.dim * s.dim * s.joint_actions) as f64 * l / n,
            }
    }

    /// `2 H sqrt(A zeta)`, or `2 H M sqrt(A~ zeta)` for factored games.
    pub fn slack(&self, n: usize, s: &ScheduleInputs) -> f64 {
        let z = self.zeta(n, s);
        let h = s.horizon as f64;
        match s.variant {
            Variant::Mb | Variant::Mf => 2.0 * h * (s.joint_actions as f64 * z).sqrt(),
            Variant::Factored => 2.0 * h * s.players as f64 * (s.max_actions as f64 * z).sqrt(),
        }
    }
}

/// Components of the optimality gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    pub delta: f64,
    pub spread: f64,
    pub slack: f64,
}

/// `max_i (vbar_i - vlow_i) + slack`.
pub fn gap(vbar: &[f64], vlow: &[f64], slack: f64) -> Gap {
    let spread = vbar
        .iter()
        .zip(vlow)
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    Gap {
        delta: spread + slack,
        spread,
        slack,
    }
}

/// Rewards as declared functions of the latent state, reached through the
/// true decoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    decoders: Vec<Decoder>,
    /// Per step, flattened `[i][z][a]`.
    rewards: Vec<Vec<f64>>,
    latents: usize,
    players: usize,
    actions: usize,
}

impl RewardModel {
    pub fn from_env(env: &BlockEnv) -> Self {
        let lg = env.latent();
        Self {
            decoders: (0..=env.horizon()).map(|h| crate::envs::true_decoder(env, h)).collect(),
            rewards: lg.rewards.clone(),
            latents: lg.num_latents,
            players: lg.players(),
            actions: lg.actions.size(),
        }
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn latents(&self) -> usize {
        self.latents
    }

    /// Latent label of `obs` under the true step-`h` decoder.
    pub fn label(&self, h: usize, obs: &Observation) -> usize {
        self.decoders[h].label(obs)
    }

    /// Rewards of every player for every joint action, `[i][a]`.
    pub fn slice(&self, h: usize, obs: &Observation) -> Vec<Vec<f64>> {
        self.latent_slice(h, self.label(h, obs))
    }

    /// Rewards `[i][a]` at latent state `z`.
    pub fn latent_slice(&self, h: usize, z: usize) -> Vec<Vec<f64>> {
        (0..self.players)
            .map(|i| {
                let start = (i * self.latents + z) * self.actions;
                self.rewards[h][start..start + self.actions].to_vec()
            })
            .collect()
    }

    /// Largest reward magnitude.
    pub fn bound(&self) -> f64 {
        self.rewards.iter().flatten().fold(0.0_f64, |m, r| m.max(r.abs()))
    }
}

/// Memoised stage solutions keyed by the exact payoff bits.
#[derive(Debug)]
pub struct StageCache {
    actions: ActionSpace,
    concept: Concept,
    cfg: SolverConfig,
    map: HashMap<Vec<u64>, Vec<f64>>,
    pub solves: usize,
    pub unconverged: usize,
    /// Solver iterations summed over all solves.
    pub iterations: usize,
}

impl StageCache {
    pub fn new(actions: ActionSpace, concept: Concept, cfg: SolverConfig) -> Self {
        Self {
            actions,
            concept,
            cfg,
            map: HashMap::new(),
            solves: 0,
            unconverged: 0,
            iterations: 0,
        }
    }

    pub fn concept(&self) -> Concept {
        self.concept
    }

    /// Equilibrium distribution of the stage game with payoffs `[i][a]`.
    pub fn solve(&mut self, payoffs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let key: Vec<u64> = payoffs.iter().flatten().map(|x| x.to_bits()).collect();
        if let Some(d) = self.map.get(&key) {
            return Ok(d.clone());
        }
        let game = StageGame::new(self.actions.clone(), payoffs.to_vec())?;
        let sol = solve(&game, self.concept, &self.cfg)?;
        self.solves += 1;
        self.iterations += sol.iterations;
        if !sol.converged {
            self.unconverged += 1;
        }
        self.map.insert(key, sol.dist.clone());
        Ok(sol.dist)
    }
}

/// `sum_a pi(a) q(a)`.
pub(crate) fn expect(dist: &[f64], q: &[f64]) -> f64 {
    dist.iter().zip(q).map(|(p, x)| p * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_bonus_equals_alpha() {
        let cov = Covariance::new(4, 1.0).unwrap();
        let phi = Feature::one_hot(4, 2);
        assert!((bonus(&phi, &cov, 0.7, 3).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(bonus(&phi, &cov, 1e9, 3).unwrap(), 3.0);
    }

    #[test]
    fn repeated_feature_bonus_shrinks_as_inverse_sqrt() {
        let phi = Feature::from_dense(&[0.6, 0.8, 0.0]);
        for n in [0usize, 1, 3, 8] {
            let mut cov = Covariance::new(3, 1.0).unwrap();
            for _ in 0..n {
                cov.add(&phi);
            }
            let b = bonus(&phi, &cov, 1.0, 10).unwrap();
            assert!((b - 1.0 / ((n + 1) as f64).sqrt()).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn gap_arithmetic() {
        let g = gap(&[0.5, 0.3], &[0.2, 0.2], 2.0 * 3.0 * (9.0_f64 * 0.01).sqrt());
        assert!((g.delta - 2.1).abs() < 1e-12);
        assert_eq!(gap(&[0.1], &[0.1], 0.0).delta, 0.0);
    }

    #[test]
    fn factored_slack_uses_per_player_actions() {
        let p = BonusParams::default();
        let s = ScheduleInputs {
            variant: Variant::Factored,
            horizon: 3,
            dim: 8,
            joint_actions: 8,
            max_actions: 2,
            players: 3,
            class_size: 16,
            episodes: 100,
            locality: 2,
        };
        let z = p.zeta(10, &s);
        assert!((p.slack(10, &s) - 2.0 * 3.0 * 3.0 * (2.0 * z).sqrt()).abs() < 1e-12);
    }
}

//! Ground-truth games and exact dynamic-programming evaluation.
//!
//! Steps are 0-based throughout: a game of horizon `H` acts at steps
//! `0..H`, and step `H` only hosts the states reached by the last
//! transition (their value is zero).

mod env;
mod obs;
mod policy;

pub use env::{
    exploitability, hadamard, hadamard_dim, materialize, roll_in, roll_in_state, rollout, Atom, BlockEnv, Emission, Privileged,
    SimState, Trajectory, TrajectoryStep, Transition,
};
pub use obs::Observation;
pub use policy::{sample_index, JointPolicy, PolicyKind, TabularObsPolicy};

use serde::{Deserialize, Serialize};

use crate::equilibrium::Concept;
use crate::error::{GerlError, Result};
use crate::space::ActionSpace;
use crate::tol;

/// Finite-horizon Markov game over a fixed latent state set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGame {
    pub horizon: usize,
    pub num_latents: usize,
    pub actions: ActionSpace,
    /// Per step, `T_h(z' | z, a)` flattened as `[z][a][z']`.
    pub transitions: Vec<Vec<f64>>,
    /// Per step, `r_{h,i}(z, a)` flattened as `[i][z][a]`.
    pub rewards: Vec<Vec<f64>>,
    pub init: Vec<f64>,
}

impl LatentGame {
    pub fn players(&self) -> usize {
        self.actions.players()
    }

    #[inline]
    pub fn transition_row(&self, h: usize, z: usize, a: usize) -> &[f64] {
        let n = self.num_latents;
        let start = (z * self.actions.size() + a) * n;
        &self.transitions[h][start..start + n]
    }

    #[inline]
    pub fn reward(&self, h: usize, player: usize, z: usize, a: usize) -> f64 {
        let a_n = self.actions.size();
        self.rewards[h][(player * self.num_latents + z) * a_n + a]
    }

    /// Largest reward magnitude.
    pub fn reward_bound(&self) -> f64 {
        self.rewards.iter().flatten().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        let (h, z, a, m) = (self.horizon, self.num_latents, self.actions.size(), self.players());
        if h == 0 || z == 0 {
            return Err(GerlError::InvalidGame("horizon and latent count must be positive".into()));
        }
        if self.transitions.len() != h || self.rewards.len() != h {
            return Err(GerlError::InvalidGame(format!("expected {h} transition and reward steps")));
        }
        check_simplex(&self.init, "initial distribution")?;
        if self.init.len() != z {
            return Err(GerlError::Dimension(format!("init has {} entries for {z} latents", self.init.len())));
        }
        for (step, t) in self.transitions.iter().enumerate() {
            if t.len() != z * a * z {
                return Err(GerlError::Dimension(format!("transition step {step} has {} entries", t.len())));
            }
            for (row, chunk) in t.chunks(z).enumerate() {
                check_simplex(chunk, &format!("transition row {row} at step {step}"))?;
            }
        }
        for (step, r) in self.rewards.iter().enumerate() {
            if r.len() != m * z * a {
                return Err(GerlError::Dimension(format!("reward step {step} has {} entries", r.len())));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(GerlError::InvalidGame(format!("non-finite reward at step {step}")));
            }
        }
        Ok(())
    }

    /// The same game in the general tabular form used by the DP routines.
    pub fn to_tabular(&self) -> TabularGame {
        TabularGame {
            horizon: self.horizon,
            state_counts: vec![self.num_latents; self.horizon + 1],
            actions: self.actions.clone(),
            transitions: self.transitions.clone(),
            rewards: self.rewards.clone(),
            init: self.init.clone(),
        }
    }
}

fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) || (total - 1.0).abs() > tol::SIMPLEX {
        return Err(GerlError::InvalidGame(format!("{what} is not a distribution (sum {total})")));
    }
    Ok(())
}

/// Markov game with step-dependent finite state sets and possibly
/// sub-stochastic transitions (learned models lose mass to regularisation).
#[derive(Debug, Clone, PartialEq)]
pub struct TabularGame {
    pub horizon: usize,
    /// State counts for steps `0..=H`.
    pub state_counts: Vec<usize>,
    pub actions: ActionSpace,
    /// Per step, `P_h(s' | s, a)` flattened as `[s][a][s']`.
    pub transitions: Vec<Vec<f64>>,
    /// Per step, `r_{h,i}(s, a)` flattened as `[i][s][a]`.
    pub rewards: Vec<Vec<f64>>,
    pub init: Vec<f64>,
}

impl TabularGame {
    pub fn players(&self) -> usize {
        self.actions.players()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.horizon;
        let a = self.actions.size();
        let m = self.players();
        if self.state_counts.len() != h + 1 || self.transitions.len() != h || self.rewards.len() != h {
            return Err(GerlError::Dimension(format!("tabular game arrays do not match horizon {h}")));
        }
        if self.init.len() != self.state_counts[0] {
            return Err(GerlError::Dimension("init length differs from step-0 state count".into()));
        }
        for step in 0..h {
            let (s, s_next) = (self.state_counts[step], self.state_counts[step + 1]);
            if self.transitions[step].len() != s * a * s_next {
                return Err(GerlError::Dimension(format!(
                    "transition step {step}: {} entries, expected {}",
                    self.transitions[step].len(),
                    s * a * s_next
                )));
            }
            if self.rewards[step].len() != m * s * a {
                return Err(GerlError::Dimension(format!("reward step {step} has wrong length")));
            }
            for row in self.transitions[step].chunks(s_next.max(1)) {
                let mass: f64 = row.iter().sum();
                if mass > 1.0 + tol::DP || row.iter().any(|&p| p < -tol::DP) {
                    return Err(GerlError::InvalidGame(format!(
                        "transition row at step {step} is not a sub-distribution (mass {mass})"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn reward(&self, h: usize, player: usize, s: usize, a: usize) -> f64 {
        let a_n = self.actions.size();
        self.rewards[h][(player * self.state_counts[h] + s) * a_n + a]
    }

    /// `Q(s, a) = r_i(s, a) + sum_{s'} P(s' | s, a) V(s')` flattened `[s][a]`.
    pub fn backup(&self, h: usize, player: usize, next_values: &[f64]) -> Vec<f64> {
        let a_n = self.actions.size();
        let (s_n, s_next) = (self.state_counts[h], self.state_counts[h + 1]);
        let trans = &self.transitions[h];
        let mut q = vec![0.0; s_n * a_n];
        for s in 0..s_n {
            for a in 0..a_n {
                let row = &trans[(s * a_n + a) * s_next..(s * a_n + a + 1) * s_next];
                let cont: f64 = row.iter().zip(next_values).map(|(p, v)| p * v).sum();
                q[s * a_n + a] = self.reward(h, player, s, a) + cont;
            }
        }
        q
    }

    fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.steps.len() != self.horizon {
            return Err(GerlError::Dimension(format!(
                "policy has {} steps for horizon {}",
                policy.steps.len(),
                self.horizon
            )));
        }
        for (h, step) in policy.steps.iter().enumerate() {
            if step.len() != self.state_counts[h] {
                return Err(GerlError::Dimension(format!("policy step {h} covers {} states", step.len())));
            }
            if step.iter().any(|d| d.len() != self.actions.size()) {
                return Err(GerlError::Dimension(format!("policy step {h} has a wrong action count")));
            }
        }
        Ok(())
    }
}

/// Dense policy over the states of a [`TabularGame`]: `steps[h][s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    pub kind: PolicyKind,
    pub steps: Vec<Vec<Vec<f64>>>,
}

impl TabularPolicy {
    pub fn uniform(game: &TabularGame) -> Self {
        let a = game.actions.size();
        Self {
            kind: PolicyKind::Product,
            steps: (0..game.horizon)
                .map(|h| vec![vec![1.0 / a as f64; a]; game.state_counts[h]])
                .collect(),
        }
    }
}

/// Per-player values: `v[i]` at the initial distribution and
/// `per_step[h][i][s]` for `h` in `0..=H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Values {
    pub v: Vec<f64>,
    pub per_step: Vec<Vec<Vec<f64>>>,
}

fn expectation(dist: &[f64], values: &[f64]) -> f64 {
    dist.iter().zip(values).map(|(p, v)| p * v).sum()
}

/// Exact values of `policy` by backward induction.
pub fn value_of_policy(game: &TabularGame, policy: &TabularPolicy) -> Result<Values> {
    game.validate()?;
    game.check_policy(policy)?;
    let m = game.players();
    let a_n = game.actions.size();
    let mut per_step = vec![vec![Vec::new(); m]; game.horizon + 1];
    per_step[game.horizon] = vec![vec![0.0; game.state_counts[game.horizon]]; m];
    for h in (0..game.horizon).rev() {
        for i in 0..m {
            let q = game.backup(h, i, &per_step[h + 1][i]);
            per_step[h][i] = (0..game.state_counts[h])
                .map(|s| expectation(&policy.steps[h][s], &q[s * a_n..(s + 1) * a_n]))
                .collect();
        }
    }
    let v = (0..m).map(|i| expectation(&game.init, &per_step[0][i])).collect();
    Ok(Values { v, per_step })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub value: f64,
    /// `values[h][s]` for `h` in `0..=H`.
    pub values: Vec<Vec<f64>>,
    /// Greedy action of the deviating player, `actions[h][s]`.
    pub actions: Vec<Vec<usize>>,
}

/// Best response of `player` to the others' (marginalised) part of `policy`.
pub fn best_response_value(game: &TabularGame, policy: &TabularPolicy, player: usize) -> Result<BestResponse> {
    game.validate()?;
    game.check_policy(policy)?;
    if player >= game.players() {
        return Err(GerlError::Dimension(format!("player {player} out of range")));
    }
    let space = &game.actions;
    let a_n = space.size();
    let n_i = space.count(player);
    let mut values = vec![Vec::new(); game.horizon + 1];
    values[game.horizon] = vec![0.0; game.state_counts[game.horizon]];
    let mut actions = vec![Vec::new(); game.horizon];
    for h in (0..game.horizon).rev() {
        let q = game.backup(h, player, &values[h + 1]);
        let mut vh = Vec::with_capacity(game.state_counts[h]);
        let mut ah = Vec::with_capacity(game.state_counts[h]);
        for s in 0..game.state_counts[h] {
            let dist = &policy.steps[h][s];
            let qs = &q[s * a_n..(s + 1) * a_n];
            let mut best = (f64::NEG_INFINITY, 0);
            for dev in 0..n_i {
                let value: f64 = dist
                    .iter()
                    .enumerate()
                    .map(|(a, p)| p * qs[space.with_action(a, player, dev)])
                    .sum();
                if value > best.0 {
                    best = (value, dev);
                }
            }
            vh.push(best.0);
            ah.push(best.1);
        }
        values[h] = vh;
        actions[h] = ah;
    }
    Ok(BestResponse {
        value: expectation(&game.init, &values[0]),
        values,
        actions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapDeviation {
    pub value: f64,
    pub values: Vec<Vec<f64>>,
    /// Strategy modification `modification[h][s][recommended] = played`.
    pub modification: Vec<Vec<Vec<usize>>>,
}

/// Value of the best strategy modification of `player` composed with `policy`.
pub fn swap_deviation_value(game: &TabularGame, policy: &TabularPolicy, player: usize) -> Result<SwapDeviation> {
    game.validate()?;
    game.check_policy(policy)?;
    if player >= game.players() {
        return Err(GerlError::Dimension(format!("player {player} out of range")));
    }
    let space = &game.actions;
    let a_n = space.size();
    let n_i = space.count(player);
    let mut values = vec![Vec::new(); game.horizon + 1];
    values[game.horizon] = vec![0.0; game.state_counts[game.horizon]];
    let mut modification = vec![Vec::new(); game.horizon];
    for h in (0..game.horizon).rev() {
        let q = game.backup(h, player, &values[h + 1]);
        let mut vh = Vec::with_capacity(game.state_counts[h]);
        let mut mh = Vec::with_capacity(game.state_counts[h]);
        for s in 0..game.state_counts[h] {
            let dist = &policy.steps[h][s];
            let qs = &q[s * a_n..(s + 1) * a_n];
            // gain[rec][dev] = sum_{a: a_i = rec} pi(a) Q(dev, a_-i)
            let mut gain = vec![vec![0.0; n_i]; n_i];
            for (a, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let rec = space.action_of(a, player);
                for (dev, g) in gain[rec].iter_mut().enumerate() {
                    *g += p * qs[space.with_action(a, player, dev)];
                }
            }
            let mut total = 0.0;
            let mut map = Vec::with_capacity(n_i);
            for (rec, row) in gain.iter().enumerate() {
                let mut best = (row[rec], rec);
                for (dev, &g) in row.iter().enumerate() {
                    if g > best.0 || (g == best.0 && dev < best.1) {
                        best = (g, dev);
                    }
                }
                total += best.0;
                map.push(best.1);
            }
            vh.push(total);
            mh.push(map);
        }
        values[h] = vh;
        modification[h] = mh;
    }
    Ok(SwapDeviation {
        value: expectation(&game.init, &values[0]),
        values,
        modification,
    })
}

/// Per-player gain from the best deviation of the given concept, clamped
/// at zero (a player may always keep following the policy).
pub fn player_gaps(game: &TabularGame, policy: &TabularPolicy, concept: Concept) -> Result<Vec<f64>> {
    let base = value_of_policy(game, policy)?;
    (0..game.players())
        .map(|i| {
            let dev = match concept {
                Concept::Ne | Concept::Cce => best_response_value(game, policy, i)?.value,
                Concept::Ce => swap_deviation_value(game, policy, i)?.value,
            };
            Ok((dev - base.v[i]).max(0.0))
        })
        .collect()
}

/// `max_i` of [`player_gaps`].
pub fn tabular_exploitability(game: &TabularGame, policy: &TabularPolicy, concept: Concept) -> Result<f64> {
    Ok(player_gaps(game, policy, concept)?
        .into_iter()
        .fold(0.0, f64::max))
}

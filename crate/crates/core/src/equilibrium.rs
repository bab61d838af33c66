//! Normal-form stage-game oracles.
//!
//! Every solver runs deterministic no-regret dynamics and certifies its
//! output with [`deviation_gap`], an exact enumeration of unilateral (CCE)
//! or swap (CE) deviations. Ties are broken towards the lowest action index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GerlError, Result};
use crate::space::ActionSpace;
use crate::tol;

/// Solution concept targeted by planning and measured by exploitability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Concept {
    Ne,
    Cce,
    Ce,
}

impl FromStr for Concept {
    type Err = GerlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ne" | "nash" => Ok(Self::Ne),
            "cce" => Ok(Self::Cce),
            "ce" => Ok(Self::Ce),
            other => Err(GerlError::Parse(format!("unknown concept `{other}` (expected ne, cce or ce)"))),
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ne => "ne",
            Self::Cce => "cce",
            Self::Ce => "ce",
        })
    }
}

/// One-shot game: payoff of every player for every joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGame {
    actions: ActionSpace,
    payoffs: Vec<Vec<f64>>,
}

impl StageGame {
    pub fn new(actions: ActionSpace, payoffs: Vec<Vec<f64>>) -> Result<Self> {
        if payoffs.len() != actions.players() {
            return Err(GerlError::Dimension(format!(
                "{} payoff tensors for {} players",
                payoffs.len(),
                actions.players()
            )));
        }
        if let Some(bad) = payoffs.iter().find(|u| u.len() != actions.size()) {
            return Err(GerlError::Dimension(format!(
                "payoff tensor of length {} for {} joint actions",
                bad.len(),
                actions.size()
            )));
        }
        Ok(Self { actions, payoffs })
    }

    /// Two-player game from a row-player matrix `u1[a1][a2]` and `u2 = -u1`.
    pub fn zero_sum(u1: &[Vec<f64>]) -> Result<Self> {
        let rows = u1.len();
        let cols = u1.first().map_or(0, Vec::len);
        let flat: Vec<f64> = u1.iter().flatten().copied().collect();
        let neg = flat.iter().map(|x| -x).collect();
        Self::new(ActionSpace::new(vec![rows, cols]), vec![flat, neg])
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn payoffs(&self) -> &[Vec<f64>] {
        &self.payoffs
    }

    pub fn payoff(&self, player: usize, joint: usize) -> f64 {
        self.payoffs[player][joint]
    }

    pub fn players(&self) -> usize {
        self.actions.players()
    }

    /// Largest payoff magnitude `B`.
    pub fn bound(&self) -> f64 {
        self.payoffs
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `max_a |u_1(a) + u_2(a)|` for two-player games, infinite otherwise.
    pub fn zero_sum_violation(&self) -> f64 {
        if self.players() != 2 {
            return f64::INFINITY;
        }
        self.payoffs[0]
            .iter()
            .zip(&self.payoffs[1])
            .fold(0.0_f64, |m, (a, b)| m.max((a + b).abs()))
    }

    pub fn expected(&self, dist: &[f64], player: usize) -> f64 {
        dist.iter().zip(&self.payoffs[player]).map(|(p, u)| p * u).sum()
    }

    /// Expected payoff of each action of player `i` against the others'
    /// independent strategies.
    fn player_utilities(&self, i: usize, strategies: &[Vec<f64>], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for a in 0..self.actions.size() {
            let mut others = 1.0;
            for (j, s) in strategies.iter().enumerate() {
                if j != i {
                    others *= s[self.actions.action_of(a, j)];
                }
            }
            if others != 0.0 {
                out[self.actions.action_of(a, i)] += others * self.payoffs[i][a];
            }
        }
    }
}

impl fmt::Display for StageGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stage game, actions {:?}", self.actions.counts())?;
        for a in 0..self.actions.size() {
            write!(f, "{:?}", self.actions.decode(a))?;
            for u in &self.payoffs {
                write!(f, " {:>10.4}", u[a])?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub eps: f64,
    pub max_iters: usize,
    /// Iterations between exact gap certifications.
    pub check_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps: tol::STAGE_EPS,
            max_iters: tol::STAGE_MAX_ITERS,
            check_every: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    /// Distribution over joint actions.
    pub dist: Vec<f64>,
    /// Per-player marginals when the solution is a product (NE).
    pub marginals: Option<Vec<Vec<f64>>>,
    /// Certified per-player deviation gap for the solved concept.
    pub gaps: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl StageSolution {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Exact per-player deviation gain of `dist`.
///
/// For NE and CCE the deviations are the fixed actions `a_i'` played against
/// the marginal of the others; the gain is measured against following the
/// recommendation, so it is never negative. For CE the deviations are all
/// maps `a_i -> a_i'`, evaluated recommendation by recommendation.
pub fn deviation_gap(game: &StageGame, dist: &[f64], concept: Concept) -> Vec<f64> {
    let space = game.actions();
    (0..game.players())
        .map(|i| {
            let u = &game.payoffs[i];
            let n_i = space.count(i);
            match concept {
                Concept::Ne | Concept::Cce => {
                    let current: f64 = dist.iter().zip(u).map(|(p, x)| p * x).sum();
                    let mut best = current;
                    for dev in 0..n_i {
                        let value: f64 = dist
                            .iter()
                            .enumerate()
                            .map(|(a, p)| p * u[space.with_action(a, i, dev)])
                            .sum();
                        best = best.max(value);
                    }
                    best - current
                }
                Concept::Ce => {
                    // gain[rec][dev] = sum over a with a_i = rec of p(a) (u(dev, a_-i) - u(a))
                    let mut gain = vec![vec![0.0; n_i]; n_i];
                    for (a, &p) in dist.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        let rec = space.action_of(a, i);
                        for (dev, g) in gain[rec].iter_mut().enumerate() {
                            *g += p * (u[space.with_action(a, i, dev)] - u[a]);
                        }
                    }
                    gain.iter()
                        .map(|row| row.iter().copied().fold(0.0_f64, f64::max))
                        .sum()
                }
            }
        })
        .collect()
}

/// Dispatch on the concept.
pub fn solve(game: &StageGame, concept: Concept, cfg: &SolverConfig) -> Result<StageSolution> {
    match concept {
        Concept::Ne => solve_zero_sum_ne(game, cfg),
        Concept::Cce => Ok(solve_cce(game, cfg)),
        Concept::Ce => Ok(solve_ce(game, cfg)),
    }
}

fn softmax(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn normalized(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Regret-matching+ strategy for a regret vector.
fn regret_matching(regrets: &[f64], out: &mut [f64]) {
    let total: f64 = regrets.iter().sum();
    if total > 0.0 {
        for (o, r) in out.iter_mut().zip(regrets) {
            *o = r / total;
        }
    } else {
        let u = 1.0 / out.len() as f64;
        out.iter_mut().for_each(|o| *o = u);
    }
}

/// Predictive regret matching+: play proportionally to
/// `[R + last instantaneous regret]^+`.
fn predictive_matching(regrets: &[f64], last: &[f64], scratch: &mut [f64], out: &mut [f64]) {
    for ((s, r), l) in scratch.iter_mut().zip(regrets).zip(last) {
        *s = (r + l).max(0.0);
    }
    regret_matching(scratch, out);
}

/// Two-player zero-sum Nash equilibrium by optimistic multiplicative weights.
///
/// Rejects games with `u_2 != -u_1`.
pub fn solve_zero_sum_ne(game: &StageGame, cfg: &SolverConfig) -> Result<StageSolution> {
    let violation = game.zero_sum_violation();
    if violation > tol::ZERO_SUM {
        return Err(GerlError::NotZeroSum(violation));
    }
    let space = game.actions().clone();
    let (rows, cols) = (space.count(0), space.count(1));
    let u = &game.payoffs[0];
    let scale = game.bound().max(1e-300);
    let eta = 0.25 / scale;

    let mut x = vec![1.0 / rows as f64; rows];
    let mut y = vec![1.0 / cols as f64; cols];
    let mut cum_x = vec![0.0; rows];
    let mut cum_y = vec![0.0; cols];
    let mut avg_x = vec![0.0; rows];
    let mut avg_y = vec![0.0; cols];
    let mut gx = vec![0.0; rows];
    let mut gy = vec![0.0; cols];
    let mut logits_x = vec![0.0; rows];
    let mut logits_y = vec![0.0; cols];

    let duality_gap = |x: &[f64], y: &[f64]| -> f64 {
        let best_row = (0..rows)
            .map(|r| (0..cols).map(|c| u[r * cols + c] * y[c]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let best_col = (0..cols)
            .map(|c| (0..rows).map(|r| u[r * cols + c] * x[r]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        best_row - best_col
    };

    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    for t in 1..=cfg.max_iters.max(1) {
        iterations = t;
        for r in 0..rows {
            gx[r] = (0..cols).map(|c| u[r * cols + c] * y[c]).sum();
        }
        for c in 0..cols {
            gy[c] = -(0..rows).map(|r| u[r * cols + c] * x[r]).sum::<f64>();
        }
        for r in 0..rows {
            avg_x[r] += x[r];
            cum_x[r] += gx[r];
            logits_x[r] = eta * (cum_x[r] + gx[r]);
        }
        for c in 0..cols {
            avg_y[c] += y[c];
            cum_y[c] += gy[c];
            logits_y[c] = eta * (cum_y[c] + gy[c]);
        }
        softmax(&logits_x, &mut x);
        softmax(&logits_y, &mut y);

        if t % cfg.check_every == 0 || t == cfg.max_iters {
            let ax = normalized(&avg_x);
            let ay = normalized(&avg_y);
            // The last iterate is certified as well; whichever is tighter wins.
            for (cx, cy) in [(ax, ay), (x.clone(), y.clone())] {
                let gap = duality_gap(&cx, &cy);
                if best.as_ref().is_none_or(|b| gap < b.0) {
                    best = Some((gap, cx, cy));
                }
            }
            if best.as_ref().is_some_and(|b| b.0 <= cfg.eps) {
                break;
            }
        }
    }
    let (gap, bx, by) = best.unwrap_or_else(|| {
        let ax = normalized(&avg_x);
        let ay = normalized(&avg_y);
        (duality_gap(&ax, &ay), ax, ay)
    });
    let marginals = vec![bx, by];
    let dist = space.product(&marginals);
    let gaps = deviation_gap(game, &dist, Concept::Ne);
    Ok(StageSolution {
        dist,
        marginals: Some(marginals),
        gaps,
        iterations,
        converged: gap <= cfg.eps,
    })
}

/// Add `weight * prod_i strategies[i][a_i]` to every joint action.
fn accumulate(space: &ActionSpace, strategies: &[Vec<f64>], weight: f64, avg: &mut [f64]) {
    for (a, slot) in avg.iter_mut().enumerate() {
        let mut p = weight;
        for (i, s) in strategies.iter().enumerate() {
            p *= s[space.action_of(a, i)];
        }
        *slot += p;
    }
}

/// Coarse correlated equilibrium as the quadratically weighted empirical
/// play of predictive regret-matching+ self-play with alternating updates.
pub fn solve_cce(game: &StageGame, cfg: &SolverConfig) -> StageSolution {
    let space = game.actions().clone();
    let m = space.players();
    let mut regrets: Vec<Vec<f64>> = space.counts().iter().map(|&n| vec![0.0; n]).collect();
    let mut last = regrets.clone();
    let mut scratch = regrets.clone();
    let mut strategies: Vec<Vec<f64>> = space.counts().iter().map(|&n| vec![1.0 / n as f64; n]).collect();
    let mut utility = vec![0.0; space.max_count()];
    let mut avg = vec![0.0; space.size()];
    let mut tracker = BestTracker::new();

    for t in 1..=cfg.max_iters.max(1) {
        let w = (t as f64) * (t as f64);
        accumulate(&space, &strategies, w, &mut avg);
        for i in 0..m {
            let n_i = space.count(i);
            game.player_utilities(i, &strategies, &mut utility[..n_i]);
            let ev: f64 = strategies[i].iter().zip(&utility).map(|(p, u)| p * u).sum();
            for k in 0..n_i {
                last[i][k] = utility[k] - ev;
                regrets[i][k] = (regrets[i][k] + last[i][k]).max(0.0);
            }
            predictive_matching(&regrets[i], &last[i], &mut scratch[i], &mut strategies[i]);
        }
        if (t % cfg.check_every == 0 || t == cfg.max_iters) && tracker.offer(game, &avg, Concept::Cce, t, cfg.eps) {
            break;
        }
    }
    tracker.finish(cfg.eps)
}

/// Correlated equilibrium from Blum-Mansour swap-regret dynamics: each
/// player runs one predictive regret-matching+ learner per recommended
/// action and plays the stationary distribution of the induced Markov
/// chain. Players update in turn; play is averaged with quadratic weights.
pub fn solve_ce(game: &StageGame, cfg: &SolverConfig) -> StageSolution {
    let space = game.actions().clone();
    let m = space.players();
    let counts = space.counts().to_vec();
    let mut regrets: Vec<Vec<Vec<f64>>> = counts.iter().map(|&n| vec![vec![0.0; n]; n]).collect();
    let mut last = regrets.clone();
    let mut scratch = vec![0.0; space.max_count()];
    let mut chains: Vec<Vec<Vec<f64>>> = counts.iter().map(|&n| vec![vec![1.0 / n as f64; n]; n]).collect();
    let mut strategies: Vec<Vec<f64>> = counts.iter().map(|&n| vec![1.0 / n as f64; n]).collect();
    let mut utility = vec![0.0; space.max_count()];
    let mut avg = vec![0.0; space.size()];
    let mut tracker = BestTracker::new();

    for t in 1..=cfg.max_iters.max(1) {
        let w = (t as f64) * (t as f64);
        accumulate(&space, &strategies, w, &mut avg);
        for i in 0..m {
            let n_i = counts[i];
            game.player_utilities(i, &strategies, &mut utility[..n_i]);
            for rec in 0..n_i {
                let weight = strategies[i][rec];
                let ev: f64 = chains[i][rec].iter().zip(&utility).map(|(q, u)| q * u).sum();
                for k in 0..n_i {
                    last[i][rec][k] = weight * (utility[k] - ev);
                    regrets[i][rec][k] = (regrets[i][rec][k] + last[i][rec][k]).max(0.0);
                }
                predictive_matching(&regrets[i][rec], &last[i][rec], &mut scratch[..n_i], &mut chains[i][rec]);
            }
            strategies[i] = stationary_distribution(&chains[i]);
        }
        if (t % cfg.check_every == 0 || t == cfg.max_iters) && tracker.offer(game, &avg, Concept::Ce, t, cfg.eps) {
            break;
        }
    }
    tracker.finish(cfg.eps)
}

/// Keeps the certified-best averaged distribution seen so far.
struct BestTracker {
    best: Option<(f64, Vec<f64>, Vec<f64>)>,
    iterations: usize,
}

impl BestTracker {
    fn new() -> Self {
        Self {
            best: None,
            iterations: 0,
        }
    }

    /// Returns true once the certified gap reaches `eps`.
    fn offer(&mut self, game: &StageGame, weights: &[f64], concept: Concept, t: usize, eps: f64) -> bool {
        self.iterations = t;
        let dist = normalized(weights);
        let gaps = deviation_gap(game, &dist, concept);
        let gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.best.as_ref().is_none_or(|b| gap < b.0) {
            self.best = Some((gap, dist, gaps));
        }
        gap <= eps
    }

    fn finish(self, eps: f64) -> StageSolution {
        let (gap, dist, gaps) = self.best.expect("at least one certification");
        StageSolution {
            dist,
            marginals: None,
            gaps,
            iterations: self.iterations,
            converged: gap <= eps,
        }
    }
}

/// A distribution `p` with `p = p Q` for a row-stochastic `Q`.
pub(crate) fn stationary_distribution(chain: &[Vec<f64>]) -> Vec<f64> {
    let n = chain.len();
    if n == 1 {
        return vec![1.0];
    }
    // Solve (Q^T - I) p = 0 with the last equation replaced by sum(p) = 1.
    let mut a = vec![vec![0.0; n + 1]; n];
    for r in 0..n {
        for c in 0..n {
            a[r][c] = chain[c][r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        a[n - 1][c] = 1.0;
    }
    a[n - 1][n] = 1.0;
    if let Some(p) = gaussian_solve(a) {
        if p.iter().all(|&x| x >= -1e-10) {
            let clipped: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
            return normalized(&clipped);
        }
    }
    // Reducible chain: iterate the lazy chain from uniform.
    let mut p = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..10_000 {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (r, row) in chain.iter().enumerate() {
            for (c, q) in row.iter().enumerate() {
                next[c] += 0.5 * p[r] * q;
            }
            next[r] += 0.5 * p[r];
        }
        std::mem::swap(&mut p, &mut next);
    }
    normalized(&p)
}

fn gaussian_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let factor = a[r][col] / a[col][col];
                if factor != 0.0 {
                    for c in col..=n {
                        a[r][c] -= factor * a[col][c];
                    }
                }
            }
        }
    }
    Some((0..n).map(|r| a[r][n] / a[r][r]).collect())
}

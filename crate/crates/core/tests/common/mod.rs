#![allow(dead_code)]

pub mod oracles;

use gerl_core::game::{PolicyKind, TabularGame, TabularPolicy};
use gerl_core::ActionSpace;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|x| x / t).collect()
}

/// Uniform payoffs in `[-1, 1]`, `[i][joint]`.
pub fn random_payoffs<R: Rng>(rng: &mut R, counts: &[usize]) -> Vec<Vec<f64>> {
    let size: usize = counts.iter().product();
    (0..counts.len())
        .map(|_| (0..size).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_counts<R: Rng>(rng: &mut R) -> Vec<usize> {
    let players = rng.random_range(2..=3);
    (0..players).map(|_| rng.random_range(1..=3)).collect()
}

/// Random tabular game with the given shape and full-mass transitions.
pub fn random_game<R: Rng>(rng: &mut R, counts: &[usize], states: &[usize]) -> TabularGame {
    let actions = ActionSpace::new(counts.to_vec());
    let a = actions.size();
    let m = counts.len();
    let horizon = states.len() - 1;
    let transitions = (0..horizon)
        .map(|h| (0..states[h] * a).flat_map(|_| simplex(rng, states[h + 1])).collect())
        .collect();
    let rewards = (0..horizon)
        .map(|h| (0..m * states[h] * a).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    TabularGame {
        horizon,
        state_counts: states.to_vec(),
        actions,
        transitions,
        rewards,
        init: simplex(rng, states[0]),
    }
}

pub fn random_policy<R: Rng>(rng: &mut R, game: &TabularGame) -> TabularPolicy {
    let a = game.actions.size();
    TabularPolicy {
        kind: PolicyKind::Correlated,
        steps: (0..game.horizon)
            .map(|h| (0..game.state_counts[h]).map(|_| simplex(rng, a)).collect())
            .collect(),
    }
}

pub fn to_oracle(game: &TabularGame) -> oracles::Game {
    oracles::Game {
        counts: game.actions.counts().to_vec(),
        states: game.state_counts.clone(),
        trans: game.transitions.clone(),
        rew: game.rewards.clone(),
        init: game.init.clone(),
    }
}

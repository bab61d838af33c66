use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::obs::Observation;
use super::policy::{sample_index, JointPolicy};
use super::{tabular_exploitability, LatentGame, TabularGame, TabularPolicy};
use crate::equilibrium::Concept;
use crate::error::{GerlError, Result};
use crate::rng;
use crate::space::ActionSpace;

const EVAL_TAG: u64 = 0x6576_616c;

/// How latent states become observations.
#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    /// Each latent emits uniformly over `per_latent` dedicated symbols.
    /// `symbols[h][z * per_latent + j]` is the `j`-th symbol of latent `z`
    /// at step `h`; each `symbols[h]` is a permutation of `0..Z * per_latent`.
    Categorical { per_latent: usize, symbols: Vec<Vec<usize>> },
    /// One-hot latent and step, Gaussian noise on those entries, zero
    /// padding to `dim`, then a Sylvester Hadamard rotation.
    /// `eval_samples` observations per latent and step represent the
    /// continuous emission during exact evaluation.
    Hadamard { dim: usize, sigma: f64, eval_samples: usize },
}

/// An observation with the latent that emitted it and its emission mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub obs: Observation,
    pub latent: usize,
    pub prob: f64,
}

/// Simulator state. The latent is private to the simulator and to
/// [`Privileged`] evaluation code.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub step: usize,
    pub obs: Observation,
    pub(crate) latent: usize,
}

/// Outcome of one simulator step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub rewards: Vec<f64>,
    pub next_obs: Observation,
}

/// One recorded step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub h: usize,
    pub obs: Observation,
    pub joint: usize,
    pub rewards: Vec<f64>,
    pub next_obs: Observation,
    pub(crate) latent: usize,
}

pub type Trajectory = Vec<TrajectoryStep>;

/// Block Markov game: a latent game seen through a block emission.
#[derive(Debug, Clone)]
pub struct BlockEnv {
    latent: LatentGame,
    emission: Emission,
    seed: u64,
    decoders: Vec<Vec<usize>>,
    hadamard: Vec<Vec<f64>>,
    lifted: OnceLock<(TabularGame, Vec<Vec<Atom>>)>,
}

impl PartialEq for BlockEnv {
    fn eq(&self, other: &Self) -> bool {
        self.latent == other.latent && self.emission == other.emission && self.seed == other.seed
    }
}

/// Sylvester construction of the `dim x dim` Hadamard matrix.
pub fn hadamard(dim: usize) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(GerlError::Config(format!("Hadamard dimension {dim} is not a power of two")));
    }
    let mut m = vec![vec![1.0]];
    while m.len() < dim {
        let n = m.len();
        let mut next = vec![vec![0.0; 2 * n]; 2 * n];
        for r in 0..n {
            for c in 0..n {
                next[r][c] = m[r][c];
                next[r][c + n] = m[r][c];
                next[r + n][c] = m[r][c];
                next[r + n][c + n] = -m[r][c];
            }
        }
        m = next;
    }
    Ok(m)
}

/// Observation dimension for horizon `h` and `z` latents: `2^ceil(log2(h + z + 1))`.
pub fn hadamard_dim(horizon: usize, latents: usize) -> usize {
    (horizon + latents + 1).next_power_of_two()
}

impl BlockEnv {
    pub fn new(latent: LatentGame, emission: Emission, seed: u64) -> Result<Self> {
        latent.validate()?;
        let (h, z) = (latent.horizon, latent.num_latents);
        let mut decoders = Vec::new();
        let mut had = Vec::new();
        match &emission {
            Emission::Categorical { per_latent, symbols } => {
                let n = z * per_latent;
                if *per_latent == 0 || symbols.len() != h + 1 {
                    return Err(GerlError::InvalidGame(format!(
                        "categorical emission needs {} symbol tables and a positive per-latent count",
                        h + 1
                    )));
                }
                for (step, table) in symbols.iter().enumerate() {
                    let mut inverse = vec![usize::MAX; n];
                    if table.len() != n {
                        return Err(GerlError::Dimension(format!("symbol table {step} has {} entries", table.len())));
                    }
                    for (slot, &sym) in table.iter().enumerate() {
                        if sym >= n || inverse[sym] != usize::MAX {
                            return Err(GerlError::InvalidGame(format!(
                                "symbol table {step} is not a permutation (symbol {sym})"
                            )));
                        }
                        inverse[sym] = slot / per_latent;
                    }
                    decoders.push(inverse);
                }
            }
            Emission::Hadamard { dim, sigma, eval_samples } => {
                if *dim < h + z + 1 {
                    return Err(GerlError::Config(format!("observation dimension {dim} below {}", h + z + 1)));
                }
                if !(*sigma >= 0.0 && sigma.is_finite()) || *eval_samples == 0 {
                    return Err(GerlError::Config("invalid noise level or evaluation sample count".into()));
                }
                had = hadamard(*dim)?;
            }
        }
        Ok(Self {
            latent,
            emission,
            seed,
            decoders,
            hadamard: had,
            lifted: OnceLock::new(),
        })
    }

    pub fn latent(&self) -> &LatentGame {
        &self.latent
    }

    pub fn emission(&self) -> &Emission {
        &self.emission
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> usize {
        self.latent.horizon
    }

    pub fn players(&self) -> usize {
        self.latent.players()
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.latent.actions
    }

    pub fn num_latents(&self) -> usize {
        self.latent.num_latents
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.emission, Emission::Categorical { .. })
    }

    /// The finite observation alphabet at step `h` (categorical mode only).
    pub fn obs_space(&self, h: usize) -> Option<Vec<Observation>> {
        match &self.emission {
            Emission::Categorical { symbols, .. } if h < symbols.len() => {
                Some((0..symbols[h].len()).map(Observation::Symbol).collect())
            }
            _ => None,
        }
    }

    /// Draw an observation of latent `z` at step `h`.
    pub fn emit<R: Rng + ?Sized>(&self, h: usize, z: usize, rng: &mut R) -> Observation {
        match &self.emission {
            Emission::Categorical { per_latent, symbols } => {
                let j = rng.random_range(0..*per_latent);
                Observation::Symbol(symbols[h][z * per_latent + j])
            }
            Emission::Hadamard { dim, sigma, .. } => {
                let zn = self.latent.num_latents;
                let mut x = vec![0.0; *dim];
                x[z] = 1.0;
                x[zn + h] = 1.0;
                if *sigma > 0.0 {
                    let noise = Normal::new(0.0, *sigma).expect("finite sigma");
                    for v in x.iter_mut().take(zn + self.latent.horizon + 1) {
                        *v += noise.sample(rng);
                    }
                }
                let o = self
                    .hadamard
                    .iter()
                    .map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum())
                    .collect();
                Observation::Vector(o)
            }
        }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> SimState {
        let z = sample_index(&self.latent.init, rng);
        SimState {
            step: 0,
            obs: self.emit(0, z, rng),
            latent: z,
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, state: &mut SimState, joint: usize, rng: &mut R) -> Result<Transition> {
        let h = state.step;
        if h >= self.horizon() {
            return Err(GerlError::StepOutOfRange {
                step: h,
                horizon: self.horizon(),
            });
        }
        if joint >= self.actions().size() {
            return Err(GerlError::Dimension(format!("joint action {joint} out of range")));
        }
        let rewards = (0..self.players())
            .map(|i| self.latent.reward(h, i, state.latent, joint))
            .collect();
        let z_next = sample_index(self.latent.transition_row(h, state.latent, joint), rng);
        let next_obs = self.emit(h + 1, z_next, rng);
        state.step = h + 1;
        state.latent = z_next;
        state.obs = next_obs.clone();
        Ok(Transition { rewards, next_obs })
    }

    /// Rewards of all players for taking `joint` at observation `obs`.
    ///
    /// Rewards are declared functions of the latent state; the observation is
    /// mapped to its latent by the true decoder.
    pub fn rewards(&self, h: usize, obs: &Observation, joint: usize) -> Vec<f64> {
        let z = self.decode(h, obs);
        (0..self.players()).map(|i| self.latent.reward(h, i, z, joint)).collect()
    }

    fn decode(&self, h: usize, obs: &Observation) -> usize {
        match (&self.emission, obs) {
            (Emission::Categorical { .. }, Observation::Symbol(s)) => {
                self.decoders[h].get(*s).copied().unwrap_or(0)
            }
            (Emission::Hadamard { dim, .. }, Observation::Vector(o)) => {
                let mut best = (f64::NEG_INFINITY, 0);
                for z in 0..self.latent.num_latents {
                    let x: f64 = self.hadamard.iter().zip(o).map(|(row, v)| row[z] * v).sum::<f64>() / *dim as f64;
                    if x > best.0 {
                        best = (x, z);
                    }
                }
                best.1
            }
            _ => 0,
        }
    }

    pub fn privileged(&self) -> Privileged<'_> {
        Privileged { env: self }
    }

    /// Observations representing step `h` in exact evaluation: the full
    /// alphabet in categorical mode, seeded samples in Hadamard mode.
    pub fn atoms(&self, h: usize) -> Vec<Atom> {
        match &self.emission {
            Emission::Categorical { per_latent, .. } => (0..self.latent.num_latents * per_latent)
                .map(|s| {
                    let obs = Observation::Symbol(s);
                    Atom {
                        latent: self.decoders[h][s],
                        prob: 1.0 / *per_latent as f64,
                        obs,
                    }
                })
                .collect(),
            Emission::Hadamard { eval_samples, .. } => {
                let mut out = Vec::new();
                for z in 0..self.latent.num_latents {
                    let mut r = rng::stream(self.seed, &[EVAL_TAG, h as u64, z as u64]);
                    for _ in 0..*eval_samples {
                        out.push(Atom {
                            obs: self.emit(h, z, &mut r),
                            latent: z,
                            prob: 1.0 / *eval_samples as f64,
                        });
                    }
                }
                out
            }
        }
    }

    /// The game over evaluation atoms: from atom `s` the next atom `s'` is
    /// reached with probability `T(z' | z, a) * o(s' | z')`.
    pub fn lifted(&self) -> &(TabularGame, Vec<Vec<Atom>>) {
        self.lifted.get_or_init(|| {
            let lg = &self.latent;
            let (h_n, a_n, m) = (lg.horizon, lg.actions.size(), lg.players());
            let atoms: Vec<Vec<Atom>> = (0..=h_n).map(|h| self.atoms(h)).collect();
            let mut transitions = Vec::with_capacity(h_n);
            let mut rewards = Vec::with_capacity(h_n);
            for h in 0..h_n {
                let (cur, next) = (&atoms[h], &atoms[h + 1]);
                let mut t = vec![0.0; cur.len() * a_n * next.len()];
                let mut r = vec![0.0; m * cur.len() * a_n];
                for (s, atom) in cur.iter().enumerate() {
                    for a in 0..a_n {
                        let row = lg.transition_row(h, atom.latent, a);
                        let base = (s * a_n + a) * next.len();
                        for (s2, nxt) in next.iter().enumerate() {
                            t[base + s2] = row[nxt.latent] * nxt.prob;
                        }
                        for i in 0..m {
                            r[(i * cur.len() + s) * a_n + a] = lg.reward(h, i, atom.latent, a);
                        }
                    }
                }
                transitions.push(t);
                rewards.push(r);
            }
            let init = atoms[0].iter().map(|a| lg.init[a.latent] * a.prob).collect();
            let game = TabularGame {
                horizon: h_n,
                state_counts: atoms.iter().map(Vec::len).collect(),
                actions: lg.actions.clone(),
                transitions,
                rewards,
                init,
            };
            (game, atoms)
        })
    }
}

/// Evaluation-only view exposing the true decoder and simulator latents.
#[derive(Debug, Clone, Copy)]
pub struct Privileged<'a> {
    env: &'a BlockEnv,
}

impl Privileged<'_> {
    pub fn decode(&self, h: usize, obs: &Observation) -> usize {
        self.env.decode(h, obs)
    }

    pub fn latent_of(&self, state: &SimState) -> usize {
        state.latent
    }

    pub fn step_latent(&self, step: &TrajectoryStep) -> usize {
        step.latent
    }

    /// Emission probability of `obs` at step `h` given latent `z`
    /// (categorical mode; zero otherwise).
    pub fn emission_prob(&self, h: usize, obs: &Observation, z: usize) -> f64 {
        match (&self.env.emission, obs) {
            (Emission::Categorical { per_latent, .. }, Observation::Symbol(s)) => {
                if self.env.decoders[h].get(*s) == Some(&z) {
                    1.0 / *per_latent as f64
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }
}

/// Observation at step `h` reached by following `policy` from the start.
pub fn roll_in<P, R>(env: &BlockEnv, policy: &P, h: usize, rng: &mut R) -> Result<Observation>
where
    P: JointPolicy + ?Sized,
    R: Rng + ?Sized,
{
    Ok(roll_in_state(env, policy, h, rng)?.obs)
}

/// Simulator state at step `h` reached by following `policy`.
pub fn roll_in_state<P, R>(env: &BlockEnv, policy: &P, h: usize, rng: &mut R) -> Result<SimState>
where
    P: JointPolicy + ?Sized,
    R: Rng + ?Sized,
{
    if h > env.horizon() {
        return Err(GerlError::StepOutOfRange {
            step: h,
            horizon: env.horizon(),
        });
    }
    let mut state = env.reset(rng);
    for step in 0..h {
        let a = sample_index(&policy.distribution(step, &state.obs), rng);
        env.step(&mut state, a, rng)?;
    }
    Ok(state)
}

/// A full episode under `policy`.
pub fn rollout<P, R>(env: &BlockEnv, policy: &P, rng: &mut R) -> Result<Trajectory>
where
    P: JointPolicy + ?Sized,
    R: Rng + ?Sized,
{
    let mut state = env.reset(rng);
    let mut out = Vec::with_capacity(env.horizon());
    for h in 0..env.horizon() {
        let obs = state.obs.clone();
        let latent = state.latent;
        let joint = sample_index(&policy.distribution(h, &obs), rng);
        let t = env.step(&mut state, joint, rng)?;
        out.push(TrajectoryStep {
            h,
            obs,
            joint,
            rewards: t.rewards,
            next_obs: t.next_obs,
            latent,
        });
    }
    Ok(out)
}

/// Tabulate `policy` on the evaluation atoms of `env`.
pub fn materialize<P: JointPolicy + ?Sized>(env: &BlockEnv, policy: &P) -> TabularPolicy {
    let (_, atoms) = env.lifted();
    let steps = (0..env.horizon())
        .map(|h| atoms[h].iter().map(|a| policy.distribution(h, &a.obs)).collect())
        .collect();
    TabularPolicy {
        kind: policy.kind(),
        steps,
    }
}

/// Exact exploitability of `policy` in `env` for the given concept. NE and
/// CCE share the unilateral-deviation gap; CE uses strategy modifications.
pub fn exploitability<P: JointPolicy + ?Sized>(env: &BlockEnv, policy: &P, concept: Concept) -> Result<f64> {
    if policy.num_actions() != env.actions().size() {
        return Err(GerlError::Dimension(format!(
            "policy over {} joint actions for an environment with {}",
            policy.num_actions(),
            env.actions().size()
        )));
    }
    let tab = materialize(env, policy);
    tabular_exploitability(&env.lifted().0, &tab, concept)
}

//! Seeded generators for tabular, block, and factored environments and for
//! the finite candidate classes the learners select from.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GerlError, Result};
use crate::game::{hadamard_dim, BlockEnv, Emission, LatentGame};
use crate::replearn::{
    Decoder, Discriminator, DiscriminatorClass, FactorCandidate, FactorClass, FeatureClass, ModelCandidate,
    ModelClass,
};
use crate::rng::{self, SimRng};
use crate::space::ActionSpace;
use crate::tol;

const GAME_TAG: u64 = 1;
const EMISSION_TAG: u64 = 2;
const CLASS_TAG: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tabular,
    Block,
    Factored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsMode {
    Categorical,
    Hadamard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Ring,
    Grid,
}

/// Interval rewards are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardRange {
    /// Uniform on (-1, 1).
    Symmetric,
    /// Uniform on (0, 1).
    Unit,
}

macro_rules! parse_enum {
    ($ty:ident { $($name:literal => $variant:ident),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = GerlError;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok(Self::$variant),)+
                    other => Err(GerlError::Parse(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"),
                        other
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $(Self::$variant => $name,)+
                })
            }
        }
    };
}

parse_enum!(Family { "tabular" => Tabular, "block" => Block, "factored" => Factored });
parse_enum!(ObsMode { "categorical" => Categorical, "hadamard" => Hadamard });
parse_enum!(Topology { "ring" => Ring, "grid" => Grid });
parse_enum!(RewardRange { "symmetric" => Symmetric, "unit" => Unit });

/// Everything needed to regenerate an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSpec {
    pub family: Family,
    pub horizon: usize,
    /// Latent states (per player in factored games).
    pub latents: usize,
    pub players: usize,
    pub actions: usize,
    /// Symbols per latent in categorical mode.
    pub per_latent: usize,
    pub obs_mode: ObsMode,
    pub sigma: f64,
    /// Observations per latent and step used by exact evaluation in
    /// Hadamard mode.
    pub eval_samples: usize,
    pub topology: Topology,
    /// Largest neighbourhood size in factored games.
    pub locality: usize,
    pub reward_range: RewardRange,
    /// Player 2 receives the negated rewards of player 1 (two players only).
    pub zero_sum: bool,
    pub seed: u64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            family: Family::Block,
            horizon: 3,
            latents: 3,
            players: 2,
            actions: 3,
            per_latent: 2,
            obs_mode: ObsMode::Categorical,
            sigma: 0.1,
            eval_samples: 8,
            topology: Topology::Ring,
            locality: 2,
            reward_range: RewardRange::Symmetric,
            zero_sum: false,
            seed: 0,
        }
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.latents == 0 || self.players == 0 || self.actions == 0 || self.per_latent == 0 {
            return Err(GerlError::Config("environment sizes must be at least 1".into()));
        }
        if self.zero_sum && self.players != 2 {
            return Err(GerlError::Config("zero-sum environments need exactly two players".into()));
        }
        if self.family == Family::Factored && self.locality == 0 {
            return Err(GerlError::Config("factored locality must be at least 1".into()));
        }
        Ok(())
    }
}

/// A simplex row by shifting uniform(-1, 1) draws to be nonnegative and
/// normalising.
fn simplex_row(rng: &mut SimRng, n: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        row.iter_mut().for_each(|x| *x -= min);
    }
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        row.iter_mut().for_each(|x| *x /= total);
    } else {
        row.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
    row
}

fn reward(rng: &mut SimRng, range: RewardRange) -> f64 {
    match range {
        RewardRange::Symmetric => rng.random_range(-1.0..1.0),
        RewardRange::Unit => rng.random_range(0.0..1.0),
    }
}

/// Rewards for `steps` steps over `states` states, flattened `[i][s][a]`.
fn gen_rewards(rng: &mut SimRng, spec: &EnvSpec, states: usize, joint: usize) -> Vec<Vec<f64>> {
    (0..spec.horizon)
        .map(|_| {
            let per_player = states * joint;
            let mut r = vec![0.0; spec.players * per_player];
            if spec.zero_sum {
                for k in 0..per_player {
                    let x = reward(rng, spec.reward_range);
                    r[k] = x;
                    r[per_player + k] = -x;
                }
            } else {
                r.iter_mut().for_each(|x| *x = reward(rng, spec.reward_range));
            }
            r
        })
        .collect()
}

/// Random tabular Markov game with uniform initial distribution.
pub fn gen_tabular(spec: &EnvSpec) -> Result<LatentGame> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[GAME_TAG]);
    let actions = ActionSpace::uniform(spec.players, spec.actions);
    let (z, a) = (spec.latents, actions.size());
    let transitions = (0..spec.horizon)
        .map(|_| (0..z * a).flat_map(|_| simplex_row(&mut rng, z)).collect())
        .collect();
    let rewards = gen_rewards(&mut rng, spec, z, a);
    let game = LatentGame {
        horizon: spec.horizon,
        num_latents: z,
        actions,
        transitions,
        rewards,
        init: vec![1.0 / z as f64; z],
    };
    game.validate()?;
    Ok(game)
}

/// Random block Markov game: a [`gen_tabular`] game under a block emission.
pub fn gen_block(spec: &EnvSpec) -> Result<BlockEnv> {
    let latent = gen_tabular(spec)?;
    let mut rng = rng::stream(spec.seed, &[EMISSION_TAG]);
    let emission = match spec.obs_mode {
        ObsMode::Categorical => {
            let n = spec.latents * spec.per_latent;
            let symbols = (0..=spec.horizon)
                .map(|_| {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng);
                    perm
                })
                .collect();
            Emission::Categorical {
                per_latent: spec.per_latent,
                symbols,
            }
        }
        ObsMode::Hadamard => Emission::Hadamard {
            dim: hadamard_dim(spec.horizon, spec.latents),
            sigma: spec.sigma,
            eval_samples: spec.eval_samples,
        },
    };
    BlockEnv::new(latent, emission, spec.seed)
}

/// Neighbourhoods `Z_i` for `players` players, each containing `i` and at
/// most `locality` players, sorted ascending.
pub fn neighborhoods(players: usize, topology: Topology, locality: usize) -> Result<Vec<Vec<usize>>> {
    if locality == 0 {
        return Err(GerlError::Config("locality must be at least 1".into()));
    }
    let out: Vec<Vec<usize>> = match topology {
        Topology::Ring => (0..players)
            .map(|i| {
                let mut nb: Vec<usize> = (0..locality.min(players)).map(|k| (i + players - k) % players).collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect(),
        Topology::Grid => {
            let cols = (players as f64).sqrt().ceil() as usize;
            (0..players)
                .map(|i| {
                    let (r, c) = (i / cols, i % cols);
                    let mut cand = vec![i];
                    if c > 0 {
                        cand.push(i - 1);
                    }
                    if r > 0 {
                        cand.push(i - cols);
                    }
                    if c + 1 < cols && i + 1 < players {
                        cand.push(i + 1);
                    }
                    if i + cols < players {
                        cand.push(i + cols);
                    }
                    cand.truncate(locality);
                    cand.sort_unstable();
                    cand
                })
                .collect()
        }
    };
    for (i, nb) in out.iter().enumerate() {
        if nb.len() > locality || !nb.contains(&i) {
            return Err(GerlError::Config(format!("neighbourhood of player {i} violates the locality bound")));
        }
    }
    Ok(out)
}

/// Markov game whose joint transition is a product of per-player factors
/// `T_{h,i}(s_i' | s[Z_i], a_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredGame {
    pub horizon: usize,
    pub local_states: usize,
    pub actions: ActionSpace,
    pub neighborhoods: Vec<Vec<usize>>,
    /// `factors[h][i]` flattened `[x][a_i][s_i']`, where `x` encodes
    /// `s[Z_i]` with the lowest player index most significant.
    pub factors: Vec<Vec<Vec<f64>>>,
    /// Per step, flattened `[i][s][a]` over joint states.
    pub rewards: Vec<Vec<f64>>,
    pub init: Vec<f64>,
}

impl FactoredGame {
    pub fn players(&self) -> usize {
        self.actions.players()
    }

    pub fn joint_states(&self) -> usize {
        self.local_states.pow(self.players() as u32)
    }

    /// Local state of player `j` in joint state `s`.
    #[inline]
    pub fn local(&self, s: usize, j: usize) -> usize {
        let shift = self.players() - 1 - j;
        (s / self.local_states.pow(shift as u32)) % self.local_states
    }

    /// Index of `s[Z_i]`.
    pub fn neighborhood_index(&self, s: usize, i: usize) -> usize {
        self.neighborhoods[i]
            .iter()
            .fold(0, |acc, &j| acc * self.local_states + self.local(s, j))
    }

    pub fn neighborhood_size(&self, i: usize) -> usize {
        self.local_states.pow(self.neighborhoods[i].len() as u32)
    }

    #[inline]
    pub fn factor_prob(&self, h: usize, i: usize, x: usize, a_i: usize, s_next: usize) -> f64 {
        let z = self.local_states;
        self.factors[h][i][(x * self.actions.count(i) + a_i) * z + s_next]
    }

    pub fn joint_prob(&self, h: usize, s: usize, joint: usize, s_next: usize) -> f64 {
        (0..self.players())
            .map(|i| {
                let x = self.neighborhood_index(s, i);
                let a_i = self.actions.action_of(joint, i);
                self.factor_prob(h, i, x, a_i, self.local(s_next, i))
            })
            .product()
    }

    /// The explicit joint game; refuses joint spaces above the state cap.
    pub fn to_latent(&self) -> Result<LatentGame> {
        let n = self.joint_states();
        if n > tol::JOINT_STATE_CAP {
            return Err(GerlError::TooLarge {
                size: n,
                cap: tol::JOINT_STATE_CAP,
            });
        }
        let a_n = self.actions.size();
        let transitions = (0..self.horizon)
            .map(|h| {
                let mut t = Vec::with_capacity(n * a_n * n);
                for s in 0..n {
                    for a in 0..a_n {
                        for s2 in 0..n {
                            t.push(self.joint_prob(h, s, a, s2));
                        }
                    }
                }
                t
            })
            .collect();
        let game = LatentGame {
            horizon: self.horizon,
            num_latents: n,
            actions: self.actions.clone(),
            transitions,
            rewards: self.rewards.clone(),
            init: self.init.clone(),
        };
        game.validate()?;
        Ok(game)
    }
}

/// Factored game together with its simulator over joint-state symbols.
#[derive(Debug, Clone)]
pub struct FactoredEnv {
    pub game: FactoredGame,
    pub block: BlockEnv,
}

impl FactoredEnv {
    pub fn new(game: FactoredGame, seed: u64) -> Result<Self> {
        let latent = game.to_latent()?;
        let n = latent.num_latents;
        let emission = Emission::Categorical {
            per_latent: 1,
            symbols: vec![(0..n).collect(); game.horizon + 1],
        };
        let block = BlockEnv::new(latent, emission, seed)?;
        Ok(Self { game, block })
    }
}

/// Random factored game: per-player factors drawn with the tabular row
/// recipe, rewards over joint states and actions, uniform initial state.
pub fn gen_factored(spec: &EnvSpec) -> Result<FactoredEnv> {
    spec.validate()?;
    let nb = neighborhoods(spec.players, spec.topology, spec.locality)?;
    let actions = ActionSpace::uniform(spec.players, spec.actions);
    let zl = spec.latents;
    let joint_states = zl
        .checked_pow(spec.players as u32)
        .filter(|&n| n <= tol::JOINT_STATE_CAP)
        .ok_or(GerlError::TooLarge {
            size: zl.saturating_pow(spec.players as u32),
            cap: tol::JOINT_STATE_CAP,
        })?;
    let mut rng = rng::stream(spec.seed, &[GAME_TAG]);
    let factors = (0..spec.horizon)
        .map(|_| {
            nb.iter()
                .enumerate()
                .map(|(i, z_i)| {
                    let rows = zl.pow(z_i.len() as u32) * actions.count(i);
                    (0..rows).flat_map(|_| simplex_row(&mut rng, zl)).collect()
                })
                .collect()
        })
        .collect();
    let rewards = gen_rewards(&mut rng, spec, joint_states, actions.size());
    let game = FactoredGame {
        horizon: spec.horizon,
        local_states: zl,
        actions,
        neighborhoods: nb,
        factors,
        rewards,
        init: vec![1.0 / joint_states as f64; joint_states],
    };
    FactoredEnv::new(game, spec.seed)
}

/// Sizes and decoy knobs for candidate classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassSpec {
    /// Decoders per step for feature classes, truth included.
    pub decoders: usize,
    /// Candidates per step for model classes, truth included.
    pub models: usize,
    /// Candidates per step and player for factored classes.
    pub factor_models: usize,
    /// Fractions of observations reassigned by corrupted decoders.
    pub rho: Vec<f64>,
    /// Largest and smallest mixing weight of perturbed transition tables.
    pub eps_max: f64,
    pub eps_min: f64,
    /// Witness discriminators per ordered decoder pair.
    pub witnesses: usize,
}

impl Default for ClassSpec {
    fn default() -> Self {
        Self {
            decoders: 8,
            models: 64,
            factor_models: 16,
            rho: vec![0.1, 0.3],
            eps_max: 0.5,
            eps_min: 0.01,
            witnesses: 1,
        }
    }
}

impl ClassSpec {
    fn eps_grid(&self) -> Vec<f64> {
        let n = 7;
        (0..n)
            .map(|t| self.eps_max * (self.eps_min / self.eps_max).powf(t as f64 / (n - 1) as f64))
            .collect()
    }
}

/// True decoder at step `h` as a class member.
pub fn true_decoder(env: &BlockEnv, h: usize) -> Decoder {
    let z = env.num_latents();
    match env.emission() {
        Emission::Categorical { .. } => {
            let p = env.privileged();
            let labels = env
                .obs_space(h)
                .unwrap_or_default()
                .iter()
                .map(|o| p.decode(h, o))
                .collect();
            Decoder::Table { labels, latents: z }
        }
        Emission::Hadamard { .. } => Decoder::Centroid {
            latents: z,
            relabel: (0..z).collect(),
        },
    }
}

fn random_perm(rng: &mut SimRng, z: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..z).collect();
    if z > 1 {
        while p.iter().enumerate().all(|(k, &v)| k == v) {
            p.shuffle(rng);
        }
    }
    p
}

fn random_merge(rng: &mut SimRng, z: usize) -> Vec<usize> {
    let mut relabel: Vec<usize> = (0..z).collect();
    if z > 1 {
        let from = rng.random_range(0..z);
        let to = (from + 1 + rng.random_range(0..z - 1)) % z;
        relabel[from] = to;
    }
    relabel
}

/// The `k`-th decoy derived from `truth`; cycles permutation, corruption,
/// merge, corruption with the next rho.
fn decoy_decoder(truth: &Decoder, k: usize, spec: &ClassSpec, rng: &mut SimRng) -> Decoder {
    let z = truth.latents();
    let rho = |j: usize| spec.rho.get(j % spec.rho.len().max(1)).copied().unwrap_or(0.1);
    let kind = k % 4;
    match truth {
        Decoder::Table { labels, latents } => {
            let mut out = labels.clone();
            match kind {
                0 | 2 => {
                    let relabel = if kind == 0 { random_perm(rng, z) } else { random_merge(rng, z) };
                    out.iter_mut().for_each(|l| *l = relabel[*l]);
                }
                _ => {
                    let n = out.len();
                    let count = ((rho(k / 2) * n as f64).round() as usize).clamp(1, n);
                    let mut idx: Vec<usize> = (0..n).collect();
                    idx.shuffle(rng);
                    for &s in idx.iter().take(count) {
                        if z > 1 {
                            out[s] = (out[s] + 1 + rng.random_range(0..z - 1)) % z;
                        }
                    }
                }
            }
            Decoder::Table {
                labels: out,
                latents: *latents,
            }
        }
        Decoder::Centroid { latents, relabel } | Decoder::Hashed { latents, relabel, .. } => match kind {
            0 => Decoder::Centroid {
                latents: *latents,
                relabel: random_perm(rng, z).iter().map(|&l| relabel[l]).collect(),
            },
            2 => Decoder::Centroid {
                latents: *latents,
                relabel: random_merge(rng, z).iter().map(|&l| relabel[l]).collect(),
            },
            _ => Decoder::Hashed {
                latents: *latents,
                relabel: relabel.clone(),
                rho: rho(k / 2),
                salt: rng.random(),
            },
        },
    }
}

/// Insert `truth` at a seeded position among `decoys`.
fn place_truth<T>(rng: &mut SimRng, truth: T, mut decoys: Vec<T>) -> (Vec<T>, usize) {
    let idx = rng.random_range(0..=decoys.len());
    decoys.insert(idx, truth);
    (decoys, idx)
}

/// Candidate decoders for steps `0..=H`, truth included at a seeded index.
pub fn gen_feature_class(env: &BlockEnv, spec: &ClassSpec) -> Result<FeatureClass> {
    if spec.decoders == 0 {
        return Err(GerlError::Config("feature class must hold at least one decoder".into()));
    }
    let mut rng = rng::stream(env.seed(), &[CLASS_TAG, 1]);
    let mut steps = Vec::new();
    let mut truth = Vec::new();
    for h in 0..=env.horizon() {
        let t = true_decoder(env, h);
        let decoys = (0..spec.decoders - 1).map(|k| decoy_decoder(&t, k, spec, &mut rng)).collect();
        let (list, idx) = place_truth(&mut rng, t, decoys);
        steps.push(list);
        truth.push(idx);
    }
    FeatureClass::new(steps, env.num_latents(), env.actions().size(), truth)
}

/// Discriminators for step `h` built from the step `h + 1` decoders:
/// latent indicators for every decoder, and witnesses
/// `mean_a |theta(psi(s'), a) - theta'(psi'(s'), a)|` for every ordered
/// pair of decoders with coefficients from a coarse grid.
pub fn gen_discriminator_class(env: &BlockEnv, features: &FeatureClass, spec: &ClassSpec) -> DiscriminatorClass {
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut rng = rng::stream(env.seed(), &[CLASS_TAG, 2]);
    let a_n = env.actions().size();
    let steps = (0..env.horizon())
        .map(|h| {
            let next = &features.steps[h + 1];
            let mut fs = Vec::new();
            for (k, dec) in next.iter().enumerate() {
                for label in 0..dec.latents() {
                    fs.push(Discriminator::Indicator { decoder: k, label });
                }
            }
            for a in 0..next.len() {
                for b in 0..next.len() {
                    if a == b {
                        continue;
                    }
                    for _ in 0..spec.witnesses {
                        let mut draw = |n: usize| -> Vec<f64> {
                            (0..n).map(|_| grid[rng.random_range(0..grid.len())]).collect()
                        };
                        let theta_a = draw(next[a].latents() * a_n);
                        let theta_b = draw(next[b].latents() * a_n);
                        fs.push(Discriminator::Witness {
                            a,
                            b,
                            actions: a_n,
                            theta_a,
                            theta_b,
                        });
                    }
                }
            }
            fs
        })
        .collect();
    DiscriminatorClass { steps }
}

fn mix_table(rng: &mut SimRng, table: &[f64], z_next: usize, eps: f64) -> Vec<f64> {
    table
        .chunks(z_next)
        .flat_map(|row| {
            let noise = simplex_row(rng, z_next);
            row.iter()
                .zip(noise)
                .map(|(p, q)| (1.0 - eps) * p + eps * q)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Model candidates `(psi_h, T_h, psi_{h+1})` for every step (categorical
/// observations only). Decoys cycle through perturbed transition tables on
/// a geometric grid of mixing weights, wrong current-step decoders, and
/// wrong next-step decoders.
pub fn gen_model_class(env: &BlockEnv, spec: &ClassSpec) -> Result<ModelClass> {
    if !env.is_finite() {
        return Err(GerlError::Unsupported(
            "model classes need categorical observations; use the model-free variant".into(),
        ));
    }
    if spec.models == 0 {
        return Err(GerlError::Config("model class must hold at least one candidate".into()));
    }
    let mut rng = rng::stream(env.seed(), &[CLASS_TAG, 3]);
    let lg = env.latent();
    let grid = spec.eps_grid();
    let mut steps = Vec::new();
    let mut truth_idx = Vec::new();
    for h in 0..env.horizon() {
        let cur = true_decoder(env, h);
        let next = true_decoder(env, h + 1);
        let truth = ModelCandidate::new(cur.clone(), next.clone(), lg.transitions[h].clone(), "truth".into())?;
        let mut decoys = Vec::new();
        for k in 0..spec.models - 1 {
            let cand = match k % 3 {
                0 => {
                    let eps = grid[(k / 3) % grid.len()];
                    let table = mix_table(&mut rng, &lg.transitions[h], lg.num_latents, eps);
                    ModelCandidate::new(cur.clone(), next.clone(), table, format!("mixture eps={eps:.4}"))?
                }
                1 => {
                    let d = decoy_decoder(&cur, k / 3, spec, &mut rng);
                    ModelCandidate::new(d, next.clone(), lg.transitions[h].clone(), "current decoder decoy".into())?
                }
                _ => {
                    let d = decoy_decoder(&next, k / 3, spec, &mut rng);
                    ModelCandidate::new(cur.clone(), d, lg.transitions[h].clone(), "next decoder decoy".into())?
                }
            };
            decoys.push(cand);
        }
        let (list, idx) = place_truth(&mut rng, truth, decoys);
        steps.push(list);
        truth_idx.push(idx);
    }
    ModelClass::new(steps, truth_idx)
}

/// Per-factor candidate tables for every step and player. Decoys are
/// mixtures with random rows and relabelings of the next local state.
pub fn gen_factor_class(env: &FactoredEnv, spec: &ClassSpec) -> Result<FactorClass> {
    if spec.factor_models == 0 {
        return Err(GerlError::Config("factor class must hold at least one candidate".into()));
    }
    let g = &env.game;
    let zl = g.local_states;
    let mut rng = rng::stream(env.block.seed(), &[CLASS_TAG, 4]);
    let grid = spec.eps_grid();
    let mut steps = Vec::new();
    let mut truth_idx = Vec::new();
    for h in 0..g.horizon {
        let mut per_player = Vec::new();
        let mut per_truth = Vec::new();
        for i in 0..g.players() {
            let table = g.factors[h][i].clone();
            let truth = FactorCandidate {
                table: table.clone(),
                provenance: "truth".into(),
            };
            let mut decoys = Vec::new();
            for k in 0..spec.factor_models - 1 {
                let cand = if k % 2 == 0 || zl == 1 {
                    let eps = grid[(k / 2) % grid.len()];
                    FactorCandidate {
                        table: mix_table(&mut rng, &table, zl, eps),
                        provenance: format!("mixture eps={eps:.4}"),
                    }
                } else {
                    let perm = random_perm(&mut rng, zl);
                    let mut t = table.clone();
                    for (row_out, row_in) in t.chunks_mut(zl).zip(table.chunks(zl)) {
                        for (s, &p) in row_in.iter().enumerate() {
                            row_out[perm[s]] = p;
                        }
                    }
                    FactorCandidate {
                        table: t,
                        provenance: "next-state relabeling".into(),
                    }
                };
                decoys.push(cand);
            }
            let (list, idx) = place_truth(&mut rng, truth, decoys);
            per_player.push(list);
            per_truth.push(idx);
        }
        steps.push(per_player);
        truth_idx.push(per_truth);
    }
    FactorClass::new(g, steps, truth_idx)
}

/// A single-player factored class viewed as a model class over the
/// joint-state symbols.
pub fn factor_class_as_model_class(env: &FactoredEnv, class: &FactorClass) -> Result<ModelClass> {
    let g = &env.game;
    if g.players() != 1 {
        return Err(GerlError::Unsupported("only single-player factored classes are model classes".into()));
    }
    let n = g.joint_states();
    let identity = Decoder::Table {
        labels: (0..n).collect(),
        latents: n,
    };
    let steps = class
        .steps
        .iter()
        .map(|per_player| {
            per_player[0]
                .iter()
                .map(|c| ModelCandidate::new(identity.clone(), identity.clone(), c.table.clone(), c.provenance.clone()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    ModelClass::new(steps, class.truth.iter().map(|t| t[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_latent_rows_are_point_masses() {
        let spec = EnvSpec {
            latents: 1,
            ..EnvSpec::default()
        };
        let g = gen_tabular(&spec).unwrap();
        assert!(g.transitions.iter().flatten().all(|&p| p == 1.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = EnvSpec {
            seed: 11,
            ..EnvSpec::default()
        };
        assert_eq!(gen_tabular(&spec).unwrap(), gen_tabular(&spec).unwrap());
        assert_eq!(gen_block(&spec).unwrap(), gen_block(&spec).unwrap());
    }

    #[test]
    fn reward_shape_matches_players_states_actions() {
        let g = gen_tabular(&EnvSpec::default()).unwrap();
        assert_eq!(g.rewards.len(), 3);
        assert!(g.rewards.iter().all(|r| r.len() == 2 * 3 * 9));
    }

    #[test]
    fn ring_neighborhoods() {
        let nb = neighborhoods(4, Topology::Ring, 2).unwrap();
        assert_eq!(nb, vec![vec![0, 3], vec![0, 1], vec![1, 2], vec![2, 3]]);
        let nb = neighborhoods(4, Topology::Grid, 3).unwrap();
        assert!(nb.iter().enumerate().all(|(i, z)| z.contains(&i) && z.len() <= 3));
    }

    #[test]
    fn single_player_factored_matches_tabular() {
        let spec = EnvSpec {
            family: Family::Factored,
            players: 1,
            locality: 1,
            seed: 5,
            ..EnvSpec::default()
        };
        let f = gen_factored(&spec).unwrap();
        let t = gen_tabular(&spec).unwrap();
        assert_eq!(f.game.to_latent().unwrap(), t);
    }

    #[test]
    fn zero_sum_rewards_negate() {
        let spec = EnvSpec {
            zero_sum: true,
            ..EnvSpec::default()
        };
        let g = gen_tabular(&spec).unwrap();
        let half = g.rewards[0].len() / 2;
        assert!((0..half).all(|k| g.rewards[0][k] == -g.rewards[0][half + k]));
    }
}

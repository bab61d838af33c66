//! Outer episode loops: data collection, representation learning, planning,
//! and minimum-gap policy selection.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::FactoredEnv;
use crate::equilibrium::{Concept, SolverConfig};
use crate::error::{GerlError, Result};
use crate::game::{exploitability, roll_in_state, BlockEnv, JointPolicy, Observation, PolicyKind, TabularObsPolicy};
use crate::planner::{
    bonus, factored_bonus, gap, lsvi_plan, mb_plan, BonusParams, Covariance, LsviInputs, LsviPolicy, OneHotStep,
    PlanningModel, RewardModel, ScheduleInputs, StageCache, Variant,
};
use crate::replearn::{
    factored_mle_fit, iterative_select, minimax_select, mle_fit, nonparametric_transition, Dataset,
    DiscriminatorClass, Feature, FactorClass, FeatureClass, MinimaxStats, ModelClass, Triple,
};
use crate::rng::{self, SimRng};
use crate::tol;

const RUN_TAG: u64 = 7;

/// Feature selection rule of the model-free variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Exact min-max over the finite classes.
    Minimax,
    /// Alternating discriminator and feature updates.
    Iterative,
}

impl FromStr for Selection {
    type Err = GerlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minimax" => Ok(Self::Minimax),
            "iterative" => Ok(Self::Iterative),
            other => Err(GerlError::Parse(format!("unknown selection `{other}` (expected minimax or iterative)"))),
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Minimax => "minimax",
            Self::Iterative => "iterative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub variant: Variant,
    pub concept: Concept,
    pub episodes: usize,
    pub bonus: BonusParams,
    pub selection: Selection,
    /// Rounds of the iterative selection.
    pub rounds: usize,
    /// Exact exploitability every this many episodes (0 disables).
    pub eval_every: usize,
    /// Check the ridge transition estimate against the simplex every episode.
    pub check_kernel: bool,
    pub stage_eps: f64,
    pub stage_max_iters: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Mf,
            concept: Concept::Cce,
            episodes: 200,
            bonus: BonusParams::default(),
            selection: Selection::Minimax,
            rounds: 10,
            eval_every: 10,
            check_kernel: false,
            stage_eps: tol::STAGE_EPS,
            stage_max_iters: tol::STAGE_MAX_ITERS,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(GerlError::Config("episodes must be at least 1".into()));
        }
        if self.concept == Concept::Ne {
            return Err(GerlError::Config(
                "bonus-augmented stage games are general-sum; plan with cce or ce".into(),
            ));
        }
        if self.selection == Selection::Iterative && self.rounds == 0 {
            return Err(GerlError::Config("iterative selection needs at least one round".into()));
        }
        if !(self.stage_eps > 0.0) || self.stage_max_iters == 0 {
            return Err(GerlError::Config("stage solver needs a positive tolerance and budget".into()));
        }
        self.bonus.validate()
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            eps: self.stage_eps,
            max_iters: self.stage_max_iters,
            ..SolverConfig::default()
        }
    }

    fn should_eval(&self, n: usize) -> bool {
        self.eval_every > 0 && n % self.eval_every == 0
    }
}

/// Tolerance of the pessimistic-below-optimistic check.
pub fn sandwich_tol(players: usize, horizon: usize) -> f64 {
    players as f64 * 1e-3 * horizon as f64
}

/// Policy produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnedPolicy {
    Tabular(TabularObsPolicy),
    Lsvi(LsviPolicy),
}

impl JointPolicy for LearnedPolicy {
    fn kind(&self) -> PolicyKind {
        match self {
            Self::Tabular(p) => p.kind(),
            Self::Lsvi(p) => p.kind(),
        }
    }

    fn num_actions(&self) -> usize {
        match self {
            Self::Tabular(p) => p.num_actions(),
            Self::Lsvi(p) => p.num_actions(),
        }
    }

    fn distribution(&self, step: usize, obs: &Observation) -> Vec<f64> {
        match self {
            Self::Tabular(p) => p.distribution(step, obs),
            Self::Lsvi(p) => p.distribution(step, obs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub n: usize,
    pub delta: f64,
    pub spread: f64,
    pub slack: f64,
    pub vbar: Vec<f64>,
    pub vlow: Vec<f64>,
    pub exploit: Option<f64>,
    pub sandwich_violations: usize,
    pub kernel_violations: usize,
    /// Selected candidate per step (per step and player for factored runs,
    /// flattened).
    pub selected: Vec<usize>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub sandwich_violations: usize,
    pub kernel_violations: usize,
    pub kernel_checks: usize,
    pub stage_solves: usize,
    pub unconverged: usize,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<EpisodeRecord>,
    /// Index into `records` of the minimum-gap episode.
    pub best: usize,
    pub policy: LearnedPolicy,
    pub stats: RunStats,
}

impl RunOutput {
    pub fn best_record(&self) -> &EpisodeRecord {
        &self.records[self.best]
    }
}

/// New samples of one episode: `(h, main, tilde)` for `h = H-1, ..., 0`.
pub type Fresh = Vec<(usize, Triple, Triple)>;

/// One round of collection under `policy`. For each step `h` (last first):
/// a main triple from the `h` roll-in with a uniform action, and a tilde
/// triple whose state follows one more uniform action from the `h - 1`
/// roll-in (a fresh start state when `h = 0`).
pub fn collect_triples<P: JointPolicy + ?Sized>(
    env: &BlockEnv,
    policy: &P,
    data: &mut Dataset,
    rng: &mut SimRng,
) -> Result<Fresh> {
    let a_n = env.actions().size();
    let mut fresh = Vec::with_capacity(env.horizon());
    for h in (0..env.horizon()).rev() {
        let mut state = roll_in_state(env, policy, h, rng)?;
        let obs = state.obs.clone();
        let joint = rng.random_range(0..a_n);
        let t = env.step(&mut state, joint, rng)?;
        let main = Triple {
            obs,
            joint,
            next_obs: t.next_obs,
        };
        let mut state = if h == 0 {
            env.reset(rng)
        } else {
            let mut s = roll_in_state(env, policy, h - 1, rng)?;
            let a = rng.random_range(0..a_n);
            env.step(&mut s, a, rng)?;
            s
        };
        let obs = state.obs.clone();
        let joint = rng.random_range(0..a_n);
        let t = env.step(&mut state, joint, rng)?;
        let tilde = Triple {
            obs,
            joint,
            next_obs: t.next_obs,
        };
        data.push(h, main.clone(), tilde.clone());
        fresh.push((h, main, tilde));
    }
    Ok(fresh)
}

/// Result of the learning and planning half of an episode.
struct Planned {
    vbar: Vec<f64>,
    vlow: Vec<f64>,
    slack: f64,
    policy: LearnedPolicy,
    sandwich: usize,
    kernel: usize,
    kernel_checks: usize,
    selected: Vec<usize>,
}

fn drive<F>(env: &BlockEnv, cfg: &RunConfig, cache: &mut StageCache, mut episode: F) -> Result<RunOutput>
where
    F: FnMut(usize, &Dataset, &Fresh, &mut StageCache) -> Result<Planned>,
{
    cfg.validate()?;
    let mut data = Dataset::new(env.horizon());
    let mut current = LearnedPolicy::Tabular(TabularObsPolicy::uniform(env.horizon(), env.actions().size()));
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut best: Option<(usize, f64, LearnedPolicy)> = None;
    let mut stats = RunStats::default();
    for n in 1..=cfg.episodes {
        let start = Instant::now();
        let mut rng = rng::stream(cfg.seed, &[RUN_TAG, n as u64]);
        let fresh = collect_triples(env, &current, &mut data, &mut rng)?;
        let p = episode(n, &data, &fresh, cache)?;
        let g = gap(&p.vbar, &p.vlow, p.slack);
        let exploit = if cfg.should_eval(n) {
            Some(exploitability(env, &p.policy, cfg.concept)?)
        } else {
            None
        };
        stats.sandwich_violations += p.sandwich;
        stats.kernel_violations += p.kernel;
        stats.kernel_checks += p.kernel_checks;
        if best.as_ref().is_none_or(|(_, d, _)| g.delta < *d) {
            best = Some((records.len(), g.delta, p.policy.clone()));
        }
        records.push(EpisodeRecord {
            n,
            delta: g.delta,
            spread: g.spread,
            slack: g.slack,
            vbar: p.vbar,
            vlow: p.vlow,
            exploit,
            sandwich_violations: p.sandwich,
            kernel_violations: p.kernel,
            selected: p.selected,
            wall_ms: start.elapsed().as_millis() as u64,
        });
        current = p.policy;
    }
    stats.stage_solves = cache.solves;
    stats.unconverged = cache.unconverged;
    stats.solver_iterations = cache.iterations;
    let (best, _, policy) = best.expect("at least one episode");
    Ok(RunOutput {
        records,
        best,
        policy,
        stats,
    })
}

fn alphabets(env: &BlockEnv) -> Result<Vec<Vec<Observation>>> {
    (0..=env.horizon())
        .map(|h| {
            env.obs_space(h).ok_or_else(|| {
                GerlError::Unsupported("model-based planning needs categorical observations; use the mf variant".into())
            })
        })
        .collect()
}

/// Empirical start distribution over the step-0 alphabet from both step-0
/// buffers.
fn empirical_init(data: &Dataset, size: usize) -> Result<Vec<f64>> {
    let step = data.steps.first().ok_or(GerlError::EmptyBuffer(0))?;
    let mut counts = vec![0.0; size];
    for t in step.union() {
        let s = t.obs.symbol().filter(|&s| s < size).ok_or_else(|| {
            GerlError::Dimension(format!("start observation {} outside the step-0 alphabet", t.obs))
        })?;
        counts[s] += 1.0;
    }
    let n = step.len() as f64;
    Ok(counts.into_iter().map(|c| c / n).collect())
}

fn schedule(env: &BlockEnv, variant: Variant, dim: usize, class_size: usize, episodes: usize, locality: usize) -> ScheduleInputs {
    ScheduleInputs {
        variant,
        horizon: env.horizon(),
        dim,
        joint_actions: env.actions().size(),
        max_actions: env.actions().max_count(),
        players: env.players(),
        class_size,
        episodes,
        locality,
    }
}

/// Model-based run: likelihood maximisation over `class`, planning on the
/// fitted model with elliptical bonuses.
pub fn run_gerl_mb(env: &BlockEnv, class: &ModelClass, cfg: &RunConfig) -> Result<RunOutput> {
    let alpha_set = alphabets(env)?;
    let h_n = env.horizon();
    if class.steps.len() != h_n {
        return Err(GerlError::Dimension(format!("model class covers {} steps, horizon is {h_n}", class.steps.len())));
    }
    let a_n = env.actions().size();
    let rewards = RewardModel::from_env(env);
    let tol = sandwich_tol(env.players(), h_n);
    let dim = class.steps[0][0].dim();
    let inputs = schedule(env, Variant::Mb, dim, class.max_size(), cfg.episodes, 1);
    let alpha = cfg.bonus.alpha(&inputs);
    let mut cache = StageCache::new(env.actions().clone(), cfg.concept, cfg.solver());
    drive(env, cfg, &mut cache, |n, data, _, cache| {
        let mut transitions = Vec::with_capacity(h_n);
        let mut bonuses = Vec::with_capacity(h_n);
        let mut selected = Vec::with_capacity(h_n);
        for h in 0..h_n {
            let fit = mle_fit(&class.steps[h], data.steps[h].union())?;
            let cand = &class.steps[h][fit.index];
            selected.push(fit.index);
            let d = cand.dim();
            let mut cov = Covariance::new(d, cfg.bonus.lambda)?;
            for t in &data.steps[h].main {
                cov.add(&Feature::one_hot(d, cand.feature_index(&t.obs, t.joint)));
            }
            let beta: Vec<f64> = (0..d)
                .map(|j| bonus(&Feature::one_hot(d, j), &cov, alpha, h_n))
                .collect::<Result<_>>()?;
            let next = alpha_set[h + 1].len();
            transitions.push(
                alpha_set[h]
                    .iter()
                    .map(|o| (0..a_n).map(|a| cand.row(o, a, next)).collect())
                    .collect(),
            );
            bonuses.push(
                alpha_set[h]
                    .iter()
                    .map(|o| (0..a_n).map(|a| beta[cand.feature_index(o, a)]).collect())
                    .collect(),
            );
        }
        let model = PlanningModel {
            alphabets: alpha_set.clone(),
            transitions,
            bonus: bonuses,
            init: empirical_init(data, alpha_set[0].len())?,
        };
        let plan = mb_plan(&model, &rewards, cache, tol)?;
        Ok(Planned {
            vbar: plan.vbar,
            vlow: plan.vlow,
            slack: cfg.bonus.slack(n, &inputs),
            policy: LearnedPolicy::Tabular(plan.policy),
            sandwich: plan.sandwich_violations,
            kernel: 0,
            kernel_checks: 0,
            selected,
        })
    })
}

/// Factored run: per-factor likelihood maximisation, planning on the
/// product model with the summed per-player bonuses.
pub fn run_gerl_factored(env: &FactoredEnv, class: &FactorClass, cfg: &RunConfig) -> Result<RunOutput> {
    let block = &env.block;
    let alpha_set = alphabets(block)?;
    let h_n = block.horizon();
    if class.steps.len() != h_n {
        return Err(GerlError::Dimension(format!("factor class covers {} steps, horizon is {h_n}", class.steps.len())));
    }
    let lay = &class.layout;
    let m = lay.players();
    let a_n = lay.actions.size();
    let rewards = RewardModel::from_env(block);
    let tol = sandwich_tol(m, h_n);
    let dim = (0..m).map(|i| lay.factor_dim(i)).max().unwrap_or(1);
    let locality = lay.neighborhoods.iter().map(Vec::len).max().unwrap_or(1);
    let inputs = schedule(block, Variant::Factored, dim, class.max_size(), cfg.episodes, locality);
    let alpha = cfg.bonus.alpha(&inputs);
    let mut cache = StageCache::new(lay.actions.clone(), cfg.concept, cfg.solver());
    drive(block, cfg, &mut cache, |n, data, _, cache| {
        let mut transitions = Vec::with_capacity(h_n);
        let mut bonuses = Vec::with_capacity(h_n);
        let mut selected = Vec::with_capacity(h_n * m);
        for h in 0..h_n {
            let fits = factored_mle_fit(class, h, data.steps[h].union())?;
            let tables: Vec<&[f64]> = fits
                .iter()
                .enumerate()
                .map(|(i, f)| class.steps[h][i][f.index].table.as_slice())
                .collect();
            selected.extend(fits.iter().map(|f| f.index));
            let mut covs = (0..m)
                .map(|i| Covariance::new(lay.kronecker_dim(i), cfg.bonus.lambda))
                .collect::<Result<Vec<_>>>()?;
            for t in &data.steps[h].main {
                let s = t.obs.symbol().unwrap_or(0);
                for (i, cov) in covs.iter_mut().enumerate() {
                    cov.add(&lay.kronecker(i, s, t.joint));
                }
            }
            let next = alpha_set[h + 1].len();
            let mut step_t = Vec::with_capacity(alpha_set[h].len());
            let mut step_b = Vec::with_capacity(alpha_set[h].len());
            for s in 0..alpha_set[h].len() {
                let mut rows = Vec::with_capacity(a_n);
                let mut b = Vec::with_capacity(a_n);
                for a in 0..a_n {
                    rows.push((0..next).map(|s2| lay.joint_prob(&tables, s, a, s2)).collect());
                    let phis: Vec<Feature> = (0..m).map(|i| lay.kronecker(i, s, a)).collect();
                    b.push(factored_bonus(&phis, &covs, alpha, h_n)?);
                }
                step_t.push(rows);
                step_b.push(b);
            }
            transitions.push(step_t);
            bonuses.push(step_b);
        }
        let model = PlanningModel {
            alphabets: alpha_set.clone(),
            transitions,
            bonus: bonuses,
            init: empirical_init(data, alpha_set[0].len())?,
        };
        let plan = mb_plan(&model, &rewards, cache, tol)?;
        Ok(Planned {
            vbar: plan.vbar,
            vlow: plan.vlow,
            slack: cfg.bonus.slack(n, &inputs),
            policy: LearnedPolicy::Tabular(plan.policy),
            sandwich: plan.sandwich_violations,
            kernel: 0,
            kernel_checks: 0,
            selected,
        })
    })
}

/// Labels of one stored triple under every candidate decoder.
struct Labeled {
    joint: usize,
    cur: Vec<u32>,
    next: Vec<u32>,
    cur_true: u32,
    next_true: u32,
}

fn label_triple(features: &FeatureClass, rewards: &RewardModel, h: usize, t: &Triple) -> Labeled {
    Labeled {
        joint: t.joint,
        cur: features.steps[h].iter().map(|d| d.label(&t.obs) as u32).collect(),
        next: features.steps[h + 1].iter().map(|d| d.label(&t.next_obs) as u32).collect(),
        cur_true: rewards.label(h, &t.obs) as u32,
        next_true: rewards.label(h + 1, &t.next_obs) as u32,
    }
}

/// Model-free run: min-max-min feature selection, then optimistic and
/// pessimistic value iteration, both on the union of the two buffers.
pub fn run_gerl_mf(
    env: &BlockEnv,
    features: &FeatureClass,
    discriminators: &DiscriminatorClass,
    cfg: &RunConfig,
) -> Result<RunOutput> {
    let h_n = env.horizon();
    if features.steps.len() != h_n + 1 || discriminators.steps.len() != h_n {
        return Err(GerlError::Dimension("feature classes need H + 1 steps and discriminators H".into()));
    }
    let a_n = env.actions().size();
    if features.actions != a_n {
        return Err(GerlError::Dimension("feature class and environment disagree on the joint action count".into()));
    }
    let rewards = RewardModel::from_env(env);
    let tol = sandwich_tol(env.players(), h_n);
    let inputs = schedule(env, Variant::Mf, features.dim(), features.max_size(), cfg.episodes, 1);
    let alpha = cfg.bonus.alpha(&inputs);
    let clip = h_n as f64 * (rewards.bound() + 1.0);
    let dim = features.dim();
    let mut stats: Vec<MinimaxStats> = (0..h_n).map(|h| MinimaxStats::new(features, discriminators, h)).collect();
    let mut main_l: Vec<Vec<Labeled>> = (0..h_n).map(|_| Vec::new()).collect();
    let mut tilde_l: Vec<Vec<Labeled>> = (0..h_n).map(|_| Vec::new()).collect();
    let mut cache = StageCache::new(env.actions().clone(), cfg.concept, cfg.solver());
    drive(env, cfg, &mut cache, |n, data, fresh, cache| {
        for (h, main, tilde) in fresh {
            stats[*h].push(features, discriminators, main);
            stats[*h].push(features, discriminators, tilde);
            main_l[*h].push(label_triple(features, &rewards, *h, main));
            tilde_l[*h].push(label_triple(features, &rewards, *h, tilde));
        }
        let mut selected = Vec::with_capacity(h_n);
        for s in &stats {
            let losses = s.losses(cfg.bonus.replearn_lambda)?;
            selected.push(match cfg.selection {
                Selection::Minimax => minimax_select(&losses).index,
                Selection::Iterative => iterative_select(&losses, cfg.rounds).index,
            });
        }
        let mut steps = Vec::with_capacity(h_n);
        let mut kernel = 0;
        let mut kernel_checks = 0;
        for h in 0..h_n {
            let k = selected[h];
            let k_next = selected.get(h + 1).copied();
            let mut main_counts = vec![0usize; dim];
            for l in &main_l[h] {
                main_counts[l.cur[k] as usize * a_n + l.joint] += 1;
            }
            let union = main_l[h]
                .iter()
                .chain(&tilde_l[h])
                .map(|l| {
                    let u2 = k_next.map_or(0, |k2| l.next[k2] as usize);
                    (l.cur[k] as usize * a_n + l.joint, u2, l.next_true as usize)
                })
                .collect::<Vec<_>>();
            if cfg.check_kernel {
                let feats = union.iter().map(|&(j, _, _)| Feature::one_hot(dim, j)).collect();
                let next: Vec<Observation> = data.steps[h].union().map(|t| t.next_obs.clone()).collect();
                let est = nonparametric_transition(dim, feats, &next, cfg.bonus.lambda)?;
                kernel += est.simplex_violations()?.len();
                kernel_checks += dim;
            }
            steps.push(OneHotStep {
                decoder: features.steps[h][k].clone(),
                main_counts,
                union,
            });
        }
        let start = main_l[0]
            .iter()
            .chain(&tilde_l[0])
            .map(|l| (l.cur[selected[0]] as usize, l.cur_true as usize))
            .collect();
        let plan = lsvi_plan(
            &LsviInputs {
                actions: a_n,
                rewards: &rewards,
                steps,
                alpha,
                lambda: cfg.bonus.lambda,
                clip,
                start,
                sandwich_tol: tol,
            },
            cache,
        )?;
        Ok(Planned {
            vbar: plan.vbar,
            vlow: plan.vlow,
            slack: cfg.bonus.slack(n, &inputs),
            policy: LearnedPolicy::Lsvi(plan.policy),
            sandwich: plan.sandwich_violations,
            kernel,
            kernel_checks,
            selected,
        })
    })
}

/// Dispatch on the configured variant for a block environment.
pub fn run_block(
    env: &BlockEnv,
    cfg: &RunConfig,
    classes: &crate::envs::ClassSpec,
) -> Result<RunOutput> {
    match cfg.variant {
        Variant::Mb => run_gerl_mb(env, &crate::envs::gen_model_class(env, classes)?, cfg),
        Variant::Mf => {
            let f = crate::envs::gen_feature_class(env, classes)?;
            let d = crate::envs::gen_discriminator_class(env, &f, classes);
            run_gerl_mf(env, &f, &d, cfg)
        }
        Variant::Factored => Err(GerlError::Config("the factored variant needs a factored environment".into())),
    }
}

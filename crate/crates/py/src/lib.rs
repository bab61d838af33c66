//! Python bindings: environments, policies, learning runs, and the stage
//! equilibrium solvers.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gerl_core::envs::{ClassSpec, EnvSpec, Family, ObsMode};
use gerl_core::equilibrium::{solve, SolverConfig, StageGame};
use gerl_core::game::{exploitability, JointPolicy, Observation, PolicyKind, TabularObsPolicy};
use gerl_core::harness::run_seed;
use gerl_core::io::{EnvDoc, Environment, PolicyDoc};
use gerl_core::meta::{LearnedPolicy, RunConfig};
use gerl_core::planner::{ScheduleMode, Variant};
use gerl_core::{ActionSpace, Concept, GerlError};

fn err(e: GerlError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = GerlError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

#[derive(FromPyObject)]
enum PyObs {
    Symbol(usize),
    Vector(Vec<f64>),
}

impl From<PyObs> for Observation {
    fn from(o: PyObs) -> Self {
        match o {
            PyObs::Symbol(s) => Observation::Symbol(s),
            PyObs::Vector(v) => Observation::Vector(v),
        }
    }
}

/// A generated or loaded environment.
#[pyclass(name = "Env", frozen)]
struct PyEnv {
    inner: Environment,
}

#[pymethods]
impl PyEnv {
    #[staticmethod]
    #[pyo3(signature = (horizon=3, latents=3, players=2, actions=3, obs_mode="hadamard", zero_sum=true, seed=0, family="block", per_latent=4, sigma=0.1))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        horizon: usize,
        latents: usize,
        players: usize,
        actions: usize,
        obs_mode: &str,
        zero_sum: bool,
        seed: u64,
        family: &str,
        per_latent: usize,
        sigma: f64,
    ) -> PyResult<Self> {
        let spec = EnvSpec {
            family: parse::<Family>(family)?,
            horizon,
            latents,
            players,
            actions,
            per_latent,
            obs_mode: parse::<ObsMode>(obs_mode)?,
            sigma,
            zero_sum,
            seed,
            ..EnvSpec::default()
        };
        Ok(Self {
            inner: Environment::generate(&spec).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = EnvDoc::from_json(text).and_then(|d| d.to_env()).map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        EnvDoc::from_env(&self.inner, None, None).to_json().map_err(err)
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.block().horizon()
    }

    #[getter]
    fn players(&self) -> usize {
        self.inner.block().players()
    }

    #[getter]
    fn num_latents(&self) -> usize {
        self.inner.block().num_latents()
    }

    #[getter]
    fn joint_actions(&self) -> usize {
        self.inner.block().actions().size()
    }

    /// Exact exploitability of `policy` (concept: "ne", "cce" or "ce").
    #[pyo3(signature = (policy, concept="cce"))]
    fn exploitability(&self, policy: &PyPolicy, concept: &str) -> PyResult<f64> {
        exploitability(self.inner.block(), &policy.inner, parse::<Concept>(concept)?).map_err(err)
    }
}

/// A joint policy over observations.
#[pyclass(name = "Policy", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    inner: LearnedPolicy,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn uniform(horizon: usize, joint_actions: usize) -> Self {
        Self {
            inner: LearnedPolicy::Tabular(TabularObsPolicy::uniform(horizon, joint_actions)),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = PolicyDoc::from_json(text).and_then(|d| d.to_policy()).map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        PolicyDoc::from_policy(&self.inner).to_json().map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind() {
            PolicyKind::Product => "product",
            PolicyKind::Correlated => "correlated",
        }
    }

    /// Joint-action distribution at `step` for an observation given as a
    /// symbol or a vector.
    fn distribution(&self, step: usize, obs: PyObs) -> Vec<f64> {
        self.inner.distribution(step, &obs.into())
    }
}

/// Per-episode trace of a learning run and its returned policy.
#[pyclass(name = "RunResult", frozen, get_all)]
struct PyRunResult {
    deltas: Vec<f64>,
    vbar: Vec<Vec<f64>>,
    vlow: Vec<Vec<f64>>,
    exploit: Vec<Option<f64>>,
    /// 1-based episode of the returned policy.
    best_episode: usize,
    sandwich_violations: usize,
    policy: PyPolicy,
}

/// Run one seeded learner (variant: "mb", "mf" or "factored").
#[pyfunction]
#[pyo3(signature = (env, variant="mf", concept="cce", episodes=200, seed=0, beta=0.1, eval_every=0, schedule="constant"))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    env: &PyEnv,
    variant: &str,
    concept: &str,
    episodes: usize,
    seed: u64,
    beta: f64,
    eval_every: usize,
    schedule: &str,
) -> PyResult<PyRunResult> {
    let mut cfg = RunConfig {
        variant: parse::<Variant>(variant)?,
        concept: parse::<Concept>(concept)?,
        episodes,
        seed,
        eval_every,
        ..RunConfig::default()
    };
    cfg.bonus.beta = beta;
    cfg.bonus.mode = parse::<ScheduleMode>(schedule)?;
    let out = py
        .detach(|| run_seed(&env.inner, &cfg, &ClassSpec::default()))
        .map_err(err)?;
    Ok(PyRunResult {
        deltas: out.records.iter().map(|r| r.delta).collect(),
        vbar: out.records.iter().map(|r| r.vbar.clone()).collect(),
        vlow: out.records.iter().map(|r| r.vlow.clone()).collect(),
        exploit: out.records.iter().map(|r| r.exploit).collect(),
        best_episode: out.best_record().n,
        sandwich_violations: out.stats.sandwich_violations,
        policy: PyPolicy { inner: out.policy },
    })
}

/// Solve a normal-form game. `payoffs[i][joint]` with joint actions in
/// row-major order (player 0 most significant). Returns the joint
/// distribution and its certified largest deviation gap.
#[pyfunction]
#[pyo3(signature = (actions, payoffs, concept="cce", eps=1e-3))]
fn solve_stage(actions: Vec<usize>, payoffs: Vec<Vec<f64>>, concept: &str, eps: f64) -> PyResult<(Vec<f64>, f64)> {
    let game = StageGame::new(ActionSpace::new(actions), payoffs).map_err(err)?;
    let cfg = SolverConfig {
        eps,
        ..SolverConfig::default()
    };
    let sol = solve(&game, parse::<Concept>(concept)?, &cfg).map_err(err)?;
    let gap = sol.max_gap();
    Ok((sol.dist, gap))
}

#[pymodule]
fn gerl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnv>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(solve_stage, m)?)?;
    Ok(())
}

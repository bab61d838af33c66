use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::obs::Observation;
use crate::error::{GerlError, Result};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Product,
    Correlated,
}

/// A Markov joint policy over observations: for every step, a distribution
/// over joint actions given the current observation.
pub trait JointPolicy: Send + Sync {
    fn kind(&self) -> PolicyKind;

    fn num_actions(&self) -> usize;

    fn distribution(&self, step: usize, obs: &Observation) -> Vec<f64>;

    fn sample<R: Rng + ?Sized>(&self, step: usize, obs: &Observation, rng: &mut R) -> usize
    where
        Self: Sized,
    {
        sample_index(&self.distribution(step, obs), rng)
    }
}

/// Draw an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Policy stored as explicit per-observation tables; observations without
/// an entry get the uniform joint distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularObsPolicy {
    pub kind: PolicyKind,
    pub num_actions: usize,
    pub steps: Vec<BTreeMap<Observation, Vec<f64>>>,
}

impl TabularObsPolicy {
    pub fn uniform(horizon: usize, num_actions: usize) -> Self {
        Self {
            kind: PolicyKind::Product,
            num_actions,
            steps: vec![BTreeMap::new(); horizon],
        }
    }

    pub fn new(kind: PolicyKind, horizon: usize, num_actions: usize) -> Self {
        Self {
            kind,
            num_actions,
            steps: vec![BTreeMap::new(); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn insert(&mut self, step: usize, obs: Observation, dist: Vec<f64>) -> Result<()> {
        if step >= self.steps.len() {
            return Err(GerlError::StepOutOfRange {
                step,
                horizon: self.steps.len(),
            });
        }
        if dist.len() != self.num_actions {
            return Err(GerlError::Dimension(format!(
                "distribution over {} actions for a policy over {}",
                dist.len(),
                self.num_actions
            )));
        }
        let total: f64 = dist.iter().sum();
        if (total - 1.0).abs() > tol::POLICY_SUM || dist.iter().any(|&p| p < -tol::POLICY_SUM) {
            return Err(GerlError::InvalidGame(format!(
                "policy conditional at step {step}, obs {obs} sums to {total}"
            )));
        }
        self.steps[step].insert(obs, dist);
        Ok(())
    }
}

impl JointPolicy for TabularObsPolicy {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn distribution(&self, step: usize, obs: &Observation) -> Vec<f64> {
        self.steps
            .get(step)
            .and_then(|m| m.get(obs))
            .cloned()
            .unwrap_or_else(|| vec![1.0 / self.num_actions as f64; self.num_actions])
    }
}

impl<P: JointPolicy + ?Sized> JointPolicy for std::sync::Arc<P> {
    fn kind(&self) -> PolicyKind {
        (**self).kind()
    }

    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }

    fn distribution(&self, step: usize, obs: &Observation) -> Vec<f64> {
        (**self).distribution(step, obs)
    }
}

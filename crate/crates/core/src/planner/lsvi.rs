use serde::{Deserialize, Serialize};

use super::{expect, RewardModel, StageCache};
use crate::equilibrium::Concept;
use crate::error::{GerlError, Result};
use crate::game::{JointPolicy, Observation, PolicyKind};
use crate::replearn::Decoder;

/// Sufficient statistics of one step for one-hot features
/// `phi(s, a) = e_{psi(s) * A + a}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotStep {
    /// Selected feature decoder `psi`.
    pub decoder: Decoder,
    /// Feature counts over the main buffer (bonus covariance).
    pub main_counts: Vec<usize>,
    /// Union of both buffers as `(feature index, next feature label, next
    /// true label)`.
    pub union: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct LsviInputs<'a> {
    pub actions: usize,
    pub rewards: &'a RewardModel,
    pub steps: Vec<OneHotStep>,
    pub alpha: f64,
    pub lambda: f64,
    /// Q-values are clipped to `[-clip, clip]`.
    pub clip: f64,
    /// `(feature label, true label)` of every start observation in the data.
    pub start: Vec<(usize, usize)>,
    pub sandwich_tol: f64,
}

/// Policy given by per-step tables over pairs of (learned feature label,
/// true latent label).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsviPolicy {
    pub kind: PolicyKind,
    pub num_actions: usize,
    pub decoders: Vec<Decoder>,
    pub rewards: RewardModel,
    /// `[h][u * Z + z]` joint distributions.
    pub tables: Vec<Vec<Vec<f64>>>,
}

impl LsviPolicy {
    pub fn horizon(&self) -> usize {
        self.tables.len()
    }

    fn cell(&self, h: usize, obs: &Observation) -> usize {
        self.decoders[h].label(obs) * self.rewards.latents() + self.rewards.label(h, obs)
    }
}

impl JointPolicy for LsviPolicy {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn distribution(&self, step: usize, obs: &Observation) -> Vec<f64> {
        match self.tables.get(step) {
            Some(t) => t[self.cell(step, obs)].clone(),
            None => vec![1.0 / self.num_actions as f64; self.num_actions],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsviPlan {
    pub policy: LsviPolicy,
    pub vbar: Vec<f64>,
    pub vlow: Vec<f64>,
    pub sandwich_violations: usize,
}

/// Optimistic and pessimistic least-squares value iteration with one-hot
/// features. Both covariances are diagonal, so the ridge weights are
/// per-feature means of the next-step values shrunk by `lambda`.
pub fn lsvi_plan(inputs: &LsviInputs<'_>, cache: &mut StageCache) -> Result<LsviPlan> {
    let h_n = inputs.steps.len();
    let a_n = inputs.actions;
    let m = inputs.rewards.players();
    let zt = inputs.rewards.latents();
    if h_n == 0 || inputs.start.is_empty() {
        return Err(GerlError::EmptyBuffer(0));
    }
    let horizon = h_n as f64;
    let mut tables = Vec::with_capacity(h_n);
    // Values per (feature label, true label) cell, `[cell][i]`.
    let mut vbar_next: Vec<Vec<f64>> = Vec::new();
    let mut vlow_next: Vec<Vec<f64>> = Vec::new();
    let mut violations = 0;
    for h in (0..h_n).rev() {
        let step = &inputs.steps[h];
        let zf = step.decoder.latents();
        let dim = zf * a_n;
        if step.main_counts.len() != dim {
            return Err(GerlError::Dimension(format!("step {h}: {} counts for {dim} features", step.main_counts.len())));
        }
        let mut denom = vec![inputs.lambda; dim];
        let mut hi_sum = vec![vec![0.0; dim]; m];
        let mut lo_sum = vec![vec![0.0; dim]; m];
        for &(j, u2, z2) in &step.union {
            denom[j] += 1.0;
            if h + 1 < h_n {
                let cell = u2 * zt + z2;
                for i in 0..m {
                    hi_sum[i][j] += vbar_next[cell][i];
                    lo_sum[i][j] += vlow_next[cell][i];
                }
            }
        }
        let bonus: Vec<f64> = step
            .main_counts
            .iter()
            .map(|&c| (inputs.alpha / (c as f64 + inputs.lambda).sqrt()).min(horizon))
            .collect();
        let mut table = Vec::with_capacity(zf * zt);
        let mut vbar = Vec::with_capacity(zf * zt);
        let mut vlow = Vec::with_capacity(zf * zt);
        for u in 0..zf {
            for z in 0..zt {
                let r = inputs.rewards.latent_slice(h, z);
                let mut q_hi = vec![vec![0.0; a_n]; m];
                let mut q_lo = vec![vec![0.0; a_n]; m];
                for a in 0..a_n {
                    let j = u * a_n + a;
                    for i in 0..m {
                        let c = inputs.clip;
                        q_hi[i][a] = (r[i][a] + hi_sum[i][j] / denom[j] + bonus[j]).clamp(-c, c);
                        q_lo[i][a] = (r[i][a] + lo_sum[i][j] / denom[j] - bonus[j]).clamp(-c, c);
                    }
                }
                let dist = cache.solve(&q_hi)?;
                let hi: Vec<f64> = q_hi.iter().map(|q| expect(&dist, q)).collect();
                let lo: Vec<f64> = q_lo.iter().map(|q| expect(&dist, q)).collect();
                if hi.iter().zip(&lo).any(|(x, y)| *y > x + inputs.sandwich_tol) {
                    violations += 1;
                }
                table.push(dist);
                vbar.push(hi);
                vlow.push(lo);
            }
        }
        tables.push(table);
        vbar_next = vbar;
        vlow_next = vlow;
    }
    tables.reverse();
    let n = inputs.start.len() as f64;
    let start = |v: &[Vec<f64>]| -> Vec<f64> {
        (0..m)
            .map(|i| inputs.start.iter().map(|&(u, z)| v[u * zt + z][i]).sum::<f64>() / n)
            .collect()
    };
    let kind = match cache.concept() {
        Concept::Ne => PolicyKind::Product,
        Concept::Cce | Concept::Ce => PolicyKind::Correlated,
    };
    Ok(LsviPlan {
        vbar: start(&vbar_next),
        vlow: start(&vlow_next),
        sandwich_violations: violations,
        policy: LsviPolicy {
            kind,
            num_actions: a_n,
            decoders: inputs.steps.iter().map(|s| s.decoder.clone()).collect(),
            rewards: inputs.rewards.clone(),
            tables,
        },
    })
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::data::Triple;
use super::decoder::Decoder;
use super::feature::Feature;
use crate::error::{GerlError, Result};
use crate::game::Observation;

/// Candidate one-hot features `phi(s, a) = e_{(psi(s), a)}` for steps
/// `0..=H`, one decoder per candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClass {
    pub steps: Vec<Vec<Decoder>>,
    pub latents: usize,
    pub actions: usize,
    /// Position of the true decoder in each step's list.
    pub truth: Vec<usize>,
}

impl FeatureClass {
    pub fn new(steps: Vec<Vec<Decoder>>, latents: usize, actions: usize, truth: Vec<usize>) -> Result<Self> {
        if steps.iter().any(Vec::is_empty) || truth.len() != steps.len() {
            return Err(GerlError::Config("every step needs a nonempty feature class".into()));
        }
        for d in steps.iter().flatten() {
            d.validate()?;
            if d.latents() != latents {
                return Err(GerlError::Dimension("decoders disagree on the label count".into()));
            }
        }
        Ok(Self {
            steps,
            latents,
            actions,
            truth,
        })
    }

    pub fn dim(&self) -> usize {
        self.latents * self.actions
    }

    pub fn max_size(&self) -> usize {
        self.steps.iter().map(Vec::len).max().unwrap_or(0)
    }

    #[inline]
    pub fn index(&self, h: usize, k: usize, obs: &Observation, joint: usize) -> usize {
        self.steps[h][k].label(obs) * self.actions + joint
    }

    pub fn feature(&self, h: usize, k: usize, obs: &Observation, joint: usize) -> Feature {
        Feature::one_hot(self.dim(), self.index(h, k, obs, joint))
    }
}

/// Test function `f: S -> [0, 1]` on next-step observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Discriminator {
    /// `1[psi_k(s') = label]`.
    Indicator { decoder: usize, label: usize },
    /// `mean_a |theta_a(psi_a(s'), a) - theta_b(psi_b(s'), a)|`, clipped to `[0, 1]`.
    Witness {
        a: usize,
        b: usize,
        actions: usize,
        theta_a: Vec<f64>,
        theta_b: Vec<f64>,
    },
}

impl Discriminator {
    /// Value at `obs`, given the labels of `obs` under the next-step decoders.
    pub fn eval_labels(&self, labels: &[usize]) -> f64 {
        match self {
            Self::Indicator { decoder, label } => f64::from(u8::from(labels[*decoder] == *label)),
            Self::Witness {
                a,
                b,
                actions,
                theta_a,
                theta_b,
            } => {
                let (la, lb) = (labels[*a] * actions, labels[*b] * actions);
                let total: f64 = (0..*actions).map(|j| (theta_a[la + j] - theta_b[lb + j]).abs()).sum();
                (total / *actions as f64).clamp(0.0, 1.0)
            }
        }
    }

    pub fn eval(&self, next_decoders: &[Decoder], obs: &Observation) -> f64 {
        let labels: Vec<usize> = next_decoders.iter().map(|d| d.label(obs)).collect();
        self.eval_labels(&labels)
    }
}

/// Discriminators for steps `0..H`; step `h` tests step `h + 1` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorClass {
    pub steps: Vec<Vec<Discriminator>>,
}

/// Sufficient statistics of the one-hot ridge losses `min_theta L(phi, theta, f)`
/// for every (feature, discriminator) pair at one step.
///
/// With one-hot features the normal equations are diagonal: bucket `j`
/// holding `c_j` samples with target sum `S_j` has
/// `theta_j = S_j / (c_j + lambda)` and
/// `min_theta L = (sum f^2 - sum_j S_j^2 / (c_j + lambda)) / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxStats {
    h: usize,
    dim: usize,
    features: usize,
    discriminators: usize,
    n: usize,
    counts: Vec<f64>,
    sums: Vec<f64>,
    squares: Vec<f64>,
}

impl MinimaxStats {
    pub fn new(features: &FeatureClass, discriminators: &DiscriminatorClass, h: usize) -> Self {
        let (k, f, d) = (features.steps[h].len(), discriminators.steps[h].len(), features.dim());
        Self {
            h,
            dim: d,
            features: k,
            discriminators: f,
            n: 0,
            counts: vec![0.0; k * d],
            sums: vec![0.0; k * f * d],
            squares: vec![0.0; f],
        }
    }

    pub fn from_data<'a>(
        features: &FeatureClass,
        discriminators: &DiscriminatorClass,
        h: usize,
        data: impl IntoIterator<Item = &'a Triple>,
    ) -> Self {
        let mut s = Self::new(features, discriminators, h);
        for t in data {
            s.push(features, discriminators, t);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn push(&mut self, features: &FeatureClass, discriminators: &DiscriminatorClass, t: &Triple) {
        let h = self.h;
        let next_labels: Vec<usize> = features.steps[h + 1].iter().map(|d| d.label(&t.next_obs)).collect();
        let values: Vec<f64> = discriminators.steps[h]
            .iter()
            .map(|f| f.eval_labels(&next_labels))
            .collect();
        for (f, v) in values.iter().enumerate() {
            self.squares[f] += v * v;
        }
        for k in 0..self.features {
            let j = features.index(h, k, &t.obs, t.joint);
            self.counts[k * self.dim + j] += 1.0;
            for (f, v) in values.iter().enumerate() {
                self.sums[(k * self.discriminators + f) * self.dim + j] += v;
            }
        }
        self.n += 1;
    }

    /// `min_theta L(phi_k, theta, f)`.
    pub fn loss(&self, k: usize, f: usize, lambda: f64) -> f64 {
        let n = self.n as f64;
        let base = (k * self.discriminators + f) * self.dim;
        let explained: f64 = (0..self.dim)
            .map(|j| {
                let s = self.sums[base + j];
                s * s / (self.counts[k * self.dim + j] + lambda)
            })
            .sum();
        (self.squares[f] - explained) / n
    }

    /// Loss table `[k][f]`.
    pub fn losses(&self, lambda: f64) -> Result<Vec<Vec<f64>>> {
        if self.n == 0 {
            return Err(GerlError::EmptyBuffer(self.h));
        }
        if lambda <= 0.0 {
            return Err(GerlError::Singular { lambda });
        }
        Ok((0..self.features)
            .map(|k| (0..self.discriminators).map(|f| self.loss(k, f, lambda)).collect())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxFit {
    pub index: usize,
    pub objective: f64,
    /// `max_f [L(phi_k, f) - min_k' L(phi_k', f)]` for every candidate.
    pub objectives: Vec<f64>,
}

fn column_minima(losses: &[Vec<f64>]) -> Vec<f64> {
    let f = losses.first().map_or(0, Vec::len);
    (0..f)
        .map(|j| losses.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .collect()
}

fn excess(row: &[f64], minima: &[f64]) -> Vec<f64> {
    row.iter().zip(minima).map(|(l, m)| l - m).collect()
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = k;
        }
    }
    best
}

/// Exact min-max selection from a loss table `[k][f]`.
pub fn minimax_select(losses: &[Vec<f64>]) -> MinimaxFit {
    let minima = column_minima(losses);
    let objectives: Vec<f64> = losses
        .iter()
        .map(|row| excess(row, &minima).into_iter().fold(0.0, f64::max))
        .collect();
    let index = argmin_first(&objectives);
    MinimaxFit {
        index,
        objective: objectives[index],
        objectives,
    }
}

/// `argmin_phi max_f [min_theta L(phi, theta, f) - min_{phi~, theta~} L(phi~, theta~, f)]`
/// over the step-`h` classes.
pub fn minimax_fit<'a>(
    features: &FeatureClass,
    discriminators: &DiscriminatorClass,
    h: usize,
    data: impl IntoIterator<Item = &'a Triple>,
    lambda: f64,
) -> Result<MinimaxFit> {
    let stats = MinimaxStats::from_data(features, discriminators, h, data);
    Ok(minimax_select(&stats.losses(lambda)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeFit {
    pub index: usize,
    /// Feature index before each round and the discriminator it faced.
    pub rounds: Vec<(usize, usize)>,
}

/// Alternating selection: a discriminator maximising the excess loss of the
/// current feature, then the feature minimising the summed losses over all
/// discriminators picked so far. Starts from candidate 0 and runs rounds
/// `0..=rounds`.
pub fn iterative_select(losses: &[Vec<f64>], rounds: usize) -> IterativeFit {
    let minima = column_minima(losses);
    let mut phi = 0;
    let mut totals = vec![0.0; losses.len()];
    let mut log = Vec::with_capacity(rounds + 1);
    for _ in 0..=rounds {
        let f = argmax_first(&excess(&losses[phi], &minima));
        log.push((phi, f));
        for (k, row) in losses.iter().enumerate() {
            totals[k] += row[f];
        }
        phi = argmin_first(&totals);
    }
    IterativeFit { index: phi, rounds: log }
}

pub fn iterative_fit<'a>(
    features: &FeatureClass,
    discriminators: &DiscriminatorClass,
    h: usize,
    data: impl IntoIterator<Item = &'a Triple>,
    lambda: f64,
    rounds: usize,
) -> Result<IterativeFit> {
    if rounds == 0 {
        return Err(GerlError::Config("iterative fit needs at least one round".into()));
    }
    let stats = MinimaxStats::from_data(features, discriminators, h, data);
    Ok(iterative_select(&stats.losses(lambda)?, rounds))
}

/// Dense ridge regression `min_theta mean (phi^T theta - y)^2 + (lambda / n) |theta|^2`
/// through the regularised normal equations. Returns the minimum and `theta`.
pub fn ridge_min_loss(features: &[Feature], targets: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
    let n = features.len();
    if n == 0 || targets.len() != n {
        return Err(GerlError::Dimension("ridge regression needs matching nonempty data".into()));
    }
    let d = features[0].dim;
    let mut gram = DMatrix::<f64>::identity(d, d) * lambda;
    let mut rhs = DVector::<f64>::zeros(d);
    for (phi, y) in features.iter().zip(targets) {
        let v = phi.to_dense();
        gram += &v * v.transpose();
        rhs += &v * *y;
    }
    let chol = gram.cholesky().ok_or(GerlError::Singular { lambda })?;
    let theta = chol.solve(&rhs);
    let resid: f64 = features
        .iter()
        .zip(targets)
        .map(|(phi, y)| (phi.dot(theta.as_slice()) - y).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok((resid + lambda / n as f64 * theta.norm_squared(), theta.as_slice().to_vec()))
}

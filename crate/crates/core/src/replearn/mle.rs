use super::data::Triple;
use super::decoder::Decoder;
use crate::error::{GerlError, Result};
use crate::game::{BlockEnv, Observation};

/// Low-rank model `P(s' | s, a) = phi(s, a)^T w(s')` with
/// `phi(s, a) = e_{(psi(s), a)}` and
/// `w(s')[(z, a)] = T(psi'(s') | z, a) / |psi'^{-1}(psi'(s'))|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCandidate {
    pub cur: Decoder,
    pub next: Decoder,
    /// `T(z' | z, a)` flattened `[z][a][z']`.
    pub table: Vec<f64>,
    pub provenance: String,
    actions: usize,
    preimage: Vec<usize>,
}

impl ModelCandidate {
    pub fn new(cur: Decoder, next: Decoder, table: Vec<f64>, provenance: String) -> Result<Self> {
        cur.validate()?;
        next.validate()?;
        let preimage = next
            .preimage_counts()
            .ok_or_else(|| GerlError::Unsupported("model candidates need table decoders".into()))?;
        let (zc, zn) = (cur.latents(), next.latents());
        if table.is_empty() || table.len() % (zc * zn) != 0 {
            return Err(GerlError::Dimension(format!(
                "transition table of {} entries for {zc} x {zn} labels",
                table.len()
            )));
        }
        if table.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) {
            return Err(GerlError::InvalidGame(format!("candidate '{provenance}' has entries outside [0, 1]")));
        }
        let actions = table.len() / (zc * zn);
        Ok(Self {
            cur,
            next,
            table,
            provenance,
            actions,
            preimage,
        })
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    /// Feature dimension `Z * A`.
    pub fn dim(&self) -> usize {
        self.cur.latents() * self.actions
    }

    pub fn feature_index(&self, obs: &Observation, joint: usize) -> usize {
        self.cur.label(obs) * self.actions + joint
    }

    pub fn prob(&self, obs: &Observation, joint: usize, next_obs: &Observation) -> f64 {
        let zn = self.next.latents();
        let l = self.next.label(next_obs);
        match self.preimage.get(l) {
            Some(&c) if c > 0 => self.table[self.feature_index(obs, joint) * zn + l] / c as f64,
            _ => 0.0,
        }
    }

    /// `P(. | s, a)` over the next-step alphabet `0..symbols`.
    pub fn row(&self, obs: &Observation, joint: usize, symbols: usize) -> Vec<f64> {
        (0..symbols)
            .map(|s| self.prob(obs, joint, &Observation::Symbol(s)))
            .collect()
    }
}

/// Finite model classes `M_h` for every step.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelClass {
    pub steps: Vec<Vec<ModelCandidate>>,
    /// Position of the true model in each step's list.
    pub truth: Vec<usize>,
}

impl ModelClass {
    pub fn new(steps: Vec<Vec<ModelCandidate>>, truth: Vec<usize>) -> Result<Self> {
        if steps.iter().any(Vec::is_empty) || truth.len() != steps.len() {
            return Err(GerlError::Config("every step needs a nonempty model class".into()));
        }
        for list in &steps {
            if list.iter().any(|c| c.actions != list[0].actions) {
                return Err(GerlError::Dimension("model candidates disagree on the action count".into()));
            }
        }
        Ok(Self { steps, truth })
    }

    pub fn max_size(&self) -> usize {
        self.steps.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Result of likelihood maximisation over a class.
#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub index: usize,
    /// Mean log-likelihood of the selected candidate.
    pub log_likelihood: f64,
    /// Mean log-likelihood of every candidate (`-inf` when excluded).
    pub scores: Vec<f64>,
}

/// Candidate maximising the mean log-likelihood of `data`; candidates
/// assigning zero probability to some triple are excluded, ties go to the
/// lowest index.
pub fn mle_fit<'a, I>(candidates: &[ModelCandidate], data: I) -> Result<MleFit>
where
    I: IntoIterator<Item = &'a Triple>,
    I::IntoIter: Clone,
{
    let data = data.into_iter();
    let n = data.clone().count();
    if n == 0 {
        return Err(GerlError::EmptyBuffer(0));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    let mut first_zero = Vec::with_capacity(candidates.len());
    for c in candidates {
        let mut total = 0.0;
        let mut zero = None;
        for (k, t) in data.clone().enumerate() {
            let p = c.prob(&t.obs, t.joint, &t.next_obs);
            if p <= 0.0 {
                zero = Some(k);
                break;
            }
            total += p.ln();
        }
        first_zero.push(zero);
        scores.push(if zero.is_some() { f64::NEG_INFINITY } else { total / n as f64 });
    }
    let mut best: Option<usize> = None;
    for (k, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| s > scores[b]) {
            best = Some(k);
        }
    }
    match best {
        Some(index) => Ok(MleFit {
            index,
            log_likelihood: scores[index],
            scores,
        }),
        None => {
            let k = first_zero.iter().flatten().copied().max().unwrap_or(0);
            let t = data.clone().nth(k).expect("index within data");
            Err(GerlError::NoFeasibleCandidate {
                index: k,
                obs: t.obs.to_string(),
                action: t.joint,
                next_obs: t.next_obs.to_string(),
            })
        }
    }
}

/// Mean total-variation distance between the candidate's and the true
/// conditionals at step `h`, over all step-`h` symbols and joint actions.
pub fn model_tv(env: &BlockEnv, candidate: &ModelCandidate, h: usize) -> Result<f64> {
    let cur = env
        .obs_space(h)
        .ok_or_else(|| GerlError::Unsupported("total variation needs categorical observations".into()))?;
    let next = env.obs_space(h + 1).unwrap_or_default();
    let p = env.privileged();
    let lg = env.latent();
    let a_n = env.actions().size();
    let mut total = 0.0;
    for o in &cur {
        let z = p.decode(h, o);
        for a in 0..a_n {
            let row = lg.transition_row(h, z, a);
            let tv: f64 = next
                .iter()
                .map(|o2| {
                    let truth = row[p.decode(h + 1, o2)] * p.emission_prob(h + 1, o2, p.decode(h + 1, o2));
                    (candidate.prob(o, a, o2) - truth).abs()
                })
                .sum();
            total += 0.5 * tv;
        }
    }
    Ok(total / (cur.len() * a_n) as f64)
}

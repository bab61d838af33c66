use super::data::Triple;
use super::feature::{kronecker_feature, Feature};
use super::mle::MleFit;
use crate::envs::FactoredGame;
use crate::error::{GerlError, Result};
use crate::game::Observation;
use crate::space::ActionSpace;

/// Candidate factor `T_i(s_i' | s[Z_i], a_i)` flattened `[x][a_i][s_i']`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorCandidate {
    pub table: Vec<f64>,
    pub provenance: String,
}

/// Structure of a factored game that learners may use: local state count,
/// action sets, and neighbourhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorLayout {
    pub local_states: usize,
    pub actions: ActionSpace,
    pub neighborhoods: Vec<Vec<usize>>,
}

impl FactorLayout {
    pub fn of(game: &FactoredGame) -> Self {
        Self {
            local_states: game.local_states,
            actions: game.actions.clone(),
            neighborhoods: game.neighborhoods.clone(),
        }
    }

    pub fn players(&self) -> usize {
        self.actions.players()
    }

    pub fn joint_states(&self) -> usize {
        self.local_states.pow(self.players() as u32)
    }

    #[inline]
    pub fn local(&self, s: usize, j: usize) -> usize {
        let shift = self.players() - 1 - j;
        (s / self.local_states.pow(shift as u32)) % self.local_states
    }

    pub fn neighborhood_index(&self, s: usize, i: usize) -> usize {
        self.neighborhoods[i]
            .iter()
            .fold(0, |acc, &j| acc * self.local_states + self.local(s, j))
    }

    /// Dimension of the one-hot factor feature `e_{(s[Z_i], a_i)}`.
    pub fn factor_dim(&self, i: usize) -> usize {
        self.local_states.pow(self.neighborhoods[i].len() as u32) * self.actions.count(i)
    }

    pub fn factor_feature(&self, i: usize, s: usize, joint: usize) -> Feature {
        let x = self.neighborhood_index(s, i);
        Feature::one_hot(self.factor_dim(i), x * self.actions.count(i) + self.actions.action_of(joint, i))
    }

    /// Tensor product of the factor features of the players in `Z_i`.
    pub fn kronecker(&self, i: usize, s: usize, joint: usize) -> Feature {
        let parts: Vec<Feature> = self.neighborhoods[i]
            .iter()
            .map(|&j| self.factor_feature(j, s, joint))
            .collect();
        kronecker_feature(&parts)
    }

    pub fn kronecker_dim(&self, i: usize) -> usize {
        self.neighborhoods[i].iter().map(|&j| self.factor_dim(j)).product()
    }

    #[inline]
    pub fn factor_prob(&self, table: &[f64], i: usize, s: usize, joint: usize, s_next: usize) -> f64 {
        let x = self.neighborhood_index(s, i);
        let a_i = self.actions.action_of(joint, i);
        table[(x * self.actions.count(i) + a_i) * self.local_states + self.local(s_next, i)]
    }

    /// Product of the factors at `(s, a, s')`.
    pub fn joint_prob(&self, tables: &[&[f64]], s: usize, joint: usize, s_next: usize) -> f64 {
        tables
            .iter()
            .enumerate()
            .map(|(i, t)| self.factor_prob(t, i, s, joint, s_next))
            .product()
    }
}

/// Per-player factor classes for every step.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorClass {
    /// `steps[h][i]` lists the candidates of player `i` at step `h`.
    pub steps: Vec<Vec<Vec<FactorCandidate>>>,
    pub truth: Vec<Vec<usize>>,
    pub layout: FactorLayout,
}

impl FactorClass {
    pub fn new(
        game: &FactoredGame,
        steps: Vec<Vec<Vec<FactorCandidate>>>,
        truth: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let layout = FactorLayout::of(game);
        for per_player in &steps {
            if per_player.len() != layout.players() {
                return Err(GerlError::Dimension("factor class needs one list per player".into()));
            }
            for (i, list) in per_player.iter().enumerate() {
                let expect = layout.factor_dim(i) * layout.local_states;
                if list.is_empty() || list.iter().any(|c| c.table.len() != expect) {
                    return Err(GerlError::Dimension(format!("factor candidates of player {i} need {expect} entries")));
                }
            }
        }
        Ok(Self { steps, truth, layout })
    }

    pub fn max_size(&self) -> usize {
        self.steps.iter().flatten().map(Vec::len).max().unwrap_or(0)
    }
}

fn state(obs: &Observation) -> Result<usize> {
    obs.symbol()
        .ok_or_else(|| GerlError::Unsupported("factored learning needs joint-state symbols".into()))
}

/// Per-player likelihood maximisation of the step-`h` factors.
pub fn factored_mle_fit<'a, I>(class: &FactorClass, h: usize, data: I) -> Result<Vec<MleFit>>
where
    I: IntoIterator<Item = &'a Triple>,
    I::IntoIter: Clone,
{
    let triples: Vec<(usize, usize, usize)> = data
        .into_iter()
        .map(|t| Ok((state(&t.obs)?, t.joint, state(&t.next_obs)?)))
        .collect::<Result<_>>()?;
    if triples.is_empty() {
        return Err(GerlError::EmptyBuffer(h));
    }
    let lay = &class.layout;
    let n = triples.len() as f64;
    class.steps[h]
        .iter()
        .enumerate()
        .map(|(i, list)| {
            let mut scores = Vec::with_capacity(list.len());
            let mut last_zero = 0;
            for c in list {
                let mut total = 0.0;
                let mut ok = true;
                for (k, &(s, a, s2)) in triples.iter().enumerate() {
                    let p = lay.factor_prob(&c.table, i, s, a, s2);
                    if p <= 0.0 {
                        ok = false;
                        last_zero = last_zero.max(k);
                        break;
                    }
                    total += p.ln();
                }
                scores.push(if ok { total / n } else { f64::NEG_INFINITY });
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
                    let (s, a, s2) = triples[last_zero];
                    Err(GerlError::NoFeasibleCandidate {
                        index: last_zero,
                        obs: format!("#{s} (player {i})"),
                        action: a,
                        next_obs: format!("#{s2}"),
                    })
                }
            }
        })
        .collect()
}

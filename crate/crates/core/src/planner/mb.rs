use super::{expect, RewardModel, StageCache};
use crate::equilibrium::Concept;
use crate::error::{GerlError, Result};
use crate::game::{Observation, PolicyKind, TabularObsPolicy};

/// Estimated game over explicit observation alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningModel {
    /// Observation alphabet of steps `0..=H`.
    pub alphabets: Vec<Vec<Observation>>,
    /// `P(s' | s, a)` per step, `[s][a][s']` over the next alphabet.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// Bonus per step, `[s][a]`.
    pub bonus: Vec<Vec<Vec<f64>>>,
    /// Start distribution over the step-0 alphabet.
    pub init: Vec<f64>,
}

impl PlanningModel {
    pub fn horizon(&self) -> usize {
        self.transitions.len()
    }

    pub fn validate(&self, actions: usize) -> Result<()> {
        let h_n = self.horizon();
        if self.alphabets.len() != h_n + 1 || self.bonus.len() != h_n {
            return Err(GerlError::Dimension("planning model needs H transition steps and H + 1 alphabets".into()));
        }
        if self.init.len() != self.alphabets[0].len() {
            return Err(GerlError::Dimension("start distribution does not match the step-0 alphabet".into()));
        }
        for h in 0..h_n {
            let (s_n, s2_n) = (self.alphabets[h].len(), self.alphabets[h + 1].len());
            let shape_ok = self.transitions[h].len() == s_n
                && self.bonus[h].len() == s_n
                && self.transitions[h].iter().all(|rows| {
                    rows.len() == actions && rows.iter().all(|r| r.len() == s2_n)
                })
                && self.bonus[h].iter().all(|b| b.len() == actions);
            if !shape_ok {
                return Err(GerlError::Dimension(format!("planning model step {h} has the wrong shape")));
            }
        }
        Ok(())
    }
}

/// Output of one planning call.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub policy: TabularObsPolicy,
    /// Optimistic start values per player.
    pub vbar: Vec<f64>,
    /// Pessimistic start values per player.
    pub vlow: Vec<f64>,
    /// States where the pessimistic value exceeds the optimistic one by
    /// more than the tolerance.
    pub sandwich_violations: usize,
}

/// Backward induction on the estimated model: the equilibrium of the
/// stage games on `r + b + P Vbar` defines the policy; the pessimistic
/// values follow the same policy with `r - b`.
pub fn mb_plan(
    model: &PlanningModel,
    rewards: &RewardModel,
    cache: &mut StageCache,
    sandwich_tol: f64,
) -> Result<PlanResult> {
    let h_n = model.horizon();
    let a_n = model.transitions.first().and_then(|t| t.first()).map_or(0, Vec::len);
    model.validate(a_n)?;
    let m = rewards.players();
    let kind = match cache.concept() {
        Concept::Ne => PolicyKind::Product,
        Concept::Cce | Concept::Ce => PolicyKind::Correlated,
    };
    let mut policy = TabularObsPolicy::new(kind, h_n, a_n);
    let mut vbar_next = vec![vec![0.0; m]; model.alphabets[h_n].len()];
    let mut vlow_next = vbar_next.clone();
    let mut violations = 0;
    for h in (0..h_n).rev() {
        let alphabet = &model.alphabets[h];
        let mut vbar = Vec::with_capacity(alphabet.len());
        let mut vlow = Vec::with_capacity(alphabet.len());
        for (s, obs) in alphabet.iter().enumerate() {
            let r = rewards.slice(h, obs);
            let rows = &model.transitions[h][s];
            let b = &model.bonus[h][s];
            let mut q_hi = vec![vec![0.0; a_n]; m];
            let mut q_lo = vec![vec![0.0; a_n]; m];
            for a in 0..a_n {
                for i in 0..m {
                    let (mut hi, mut lo) = (0.0, 0.0);
                    for (p, (vb, vl)) in rows[a].iter().zip(vbar_next.iter().zip(&vlow_next)) {
                        hi += p * vb[i];
                        lo += p * vl[i];
                    }
                    q_hi[i][a] = r[i][a] + b[a] + hi;
                    q_lo[i][a] = r[i][a] - b[a] + lo;
                }
            }
            let dist = cache.solve(&q_hi)?;
            let hi: Vec<f64> = q_hi.iter().map(|q| expect(&dist, q)).collect();
            let lo: Vec<f64> = q_lo.iter().map(|q| expect(&dist, q)).collect();
            if hi.iter().zip(&lo).any(|(u, l)| *l > u + sandwich_tol) {
                violations += 1;
            }
            policy.insert(h, obs.clone(), dist)?;
            vbar.push(hi);
            vlow.push(lo);
        }
        vbar_next = vbar;
        vlow_next = vlow;
    }
    let start = |v: &[Vec<f64>]| -> Vec<f64> {
        (0..m)
            .map(|i| model.init.iter().zip(v).map(|(p, x)| p * x[i]).sum())
            .collect()
    };
    Ok(PlanResult {
        policy,
        vbar: start(&vbar_next),
        vlow: start(&vlow_next),
        sandwich_violations: violations,
    })
}

use std::collections::HashMap;

use super::feature::Feature;
use crate::error::{GerlError, Result};
use crate::game::Observation;
use crate::planner::Covariance;
use crate::tol;

/// Ridge-form transition estimate
/// `P(s' | s, a) = phi(s, a)^T Lambda^{-1} sum_k phi(s_k, a_k) 1[s'_k = s']`
/// with `Lambda = sum_k phi_k phi_k^T + lambda I`.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    cov: Covariance,
    features: Vec<Feature>,
    atom_of: Vec<usize>,
    atoms: Vec<Observation>,
}

impl KernelEstimate {
    /// Next-state atoms in order of first appearance.
    pub fn atoms(&self) -> &[Observation] {
        &self.atoms
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    /// `P(. | s, a)` over [`KernelEstimate::atoms`] for the feature `phi(s, a)`.
    pub fn conditional(&self, phi: &Feature) -> Result<Vec<f64>> {
        let u = self.cov.solve(phi)?;
        let mut p = vec![0.0; self.atoms.len()];
        for (f, &atom) in self.features.iter().zip(&self.atom_of) {
            p[atom] += f.dot(&u);
        }
        Ok(p)
    }

    /// `(P f)(s, a)` for values `f` given per atom.
    pub fn apply(&self, phi: &Feature, values: &[f64]) -> Result<f64> {
        Ok(self.conditional(phi)?.iter().zip(values).map(|(p, v)| p * v).sum())
    }

    /// Conditionals at every one-hot input `e_j` that break the simplex
    /// bounds (an entry below `-1e-12` or mass above `1 + 1e-9`).
    pub fn simplex_violations(&self) -> Result<Vec<usize>> {
        let d = self.cov.dim();
        let mut bad = Vec::new();
        for j in 0..d {
            let p = self.conditional(&Feature::one_hot(d, j))?;
            let mass: f64 = p.iter().sum();
            if p.iter().any(|&x| x < -tol::SIMPLEX) || mass > 1.0 + tol::DP {
                bad.push(j);
            }
        }
        Ok(bad)
    }
}

/// Build the ridge-form estimate from features of `(s_k, a_k)` and the
/// observed next states.
pub fn nonparametric_transition(
    dim: usize,
    features: Vec<Feature>,
    next: &[Observation],
    lambda: f64,
) -> Result<KernelEstimate> {
    if features.len() != next.len() {
        return Err(GerlError::Dimension("features and next states differ in length".into()));
    }
    let mut cov = Covariance::new(dim, lambda)?;
    let mut index: HashMap<&Observation, usize> = HashMap::new();
    let mut atoms = Vec::new();
    let mut atom_of = Vec::with_capacity(next.len());
    for (f, o) in features.iter().zip(next) {
        if f.dim != dim {
            return Err(GerlError::Dimension(format!("feature of dimension {} in a {dim}-dimensional estimate", f.dim)));
        }
        cov.add(f);
        let k = *index.entry(o).or_insert_with(|| {
            atoms.push(o.clone());
            atoms.len() - 1
        });
        atom_of.push(k);
    }
    Ok(KernelEstimate {
        cov,
        features,
        atom_of,
        atoms,
    })
}

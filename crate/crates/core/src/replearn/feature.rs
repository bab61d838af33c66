use nalgebra::DVector;

/// Sparse feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl Feature {
    pub fn one_hot(dim: usize, index: usize) -> Self {
        Self {
            dim,
            entries: vec![(index, 1.0)],
        }
    }

    pub fn from_dense(v: &[f64]) -> Self {
        Self {
            dim: v.len(),
            entries: v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(k, x)| (k, *x)).collect(),
        }
    }

    pub fn to_dense(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        for &(k, x) in &self.entries {
            v[k] += x;
        }
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_dense().norm()
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(k, x)| x * w[k]).sum()
    }
}

/// Ordered tensor product: the first factor is the most significant index.
pub fn kronecker_feature(parts: &[Feature]) -> Feature {
    let mut out = Feature {
        dim: 1,
        entries: vec![(0, 1.0)],
    };
    for p in parts {
        let mut entries = Vec::with_capacity(out.entries.len() * p.entries.len());
        for &(i, x) in &out.entries {
            for &(j, y) in &p.entries {
                entries.push((i * p.dim + j, x * y));
            }
        }
        out = Feature {
            dim: out.dim * p.dim,
            entries,
        };
    }
    out
}

use serde::{Deserialize, Serialize};

use crate::error::{GerlError, Result};
use crate::game::Observation;

/// A candidate map from observations to latent labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Decoder {
    /// Lookup table over a categorical alphabet.
    Table { labels: Vec<usize>, latents: usize },
    /// Hadamard-emission decoder: undo the rotation (entry `z` of `H^T o`)
    /// and pick the largest latent coordinate, then relabel.
    Centroid { latents: usize, relabel: Vec<usize> },
    /// [`Decoder::Centroid`] with a hashed fraction `rho` of observations
    /// moved to a different label.
    Hashed {
        latents: usize,
        relabel: Vec<usize>,
        rho: f64,
        salt: u64,
    },
}

/// Entry `(row, col)` of the Sylvester Hadamard matrix.
#[inline]
fn sylvester(row: usize, col: usize) -> f64 {
    if (row & col).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn centroid_argmax(latents: usize, o: &[f64]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for z in 0..latents {
        let x: f64 = o.iter().enumerate().map(|(k, v)| sylvester(k, z) * v).sum();
        if x > best.0 {
            best = (x, z);
        }
    }
    best.1
}

impl Decoder {
    /// Number of labels.
    pub fn latents(&self) -> usize {
        match self {
            Self::Table { latents, .. } | Self::Centroid { latents, .. } | Self::Hashed { latents, .. } => *latents,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let z = self.latents();
        let ok = match self {
            Self::Table { labels, .. } => labels.iter().all(|&l| l < z),
            Self::Centroid { relabel, .. } | Self::Hashed { relabel, .. } => {
                relabel.len() == z && relabel.iter().all(|&l| l < z)
            }
        };
        if z == 0 || !ok {
            return Err(GerlError::InvalidGame("decoder labels out of range".into()));
        }
        Ok(())
    }

    pub fn label(&self, obs: &Observation) -> usize {
        match (self, obs) {
            (Self::Table { labels, .. }, Observation::Symbol(s)) => labels.get(*s).copied().unwrap_or(0),
            (Self::Centroid { latents, relabel }, Observation::Vector(o)) => relabel[centroid_argmax(*latents, o)],
            (
                Self::Hashed {
                    latents,
                    relabel,
                    rho,
                    salt,
                },
                Observation::Vector(o),
            ) => {
                let base = relabel[centroid_argmax(*latents, o)];
                let d = obs.digest(*salt);
                let u = (d >> 11) as f64 / (1u64 << 53) as f64;
                if u < *rho && *latents > 1 {
                    (base + 1 + (d as usize % (latents - 1))) % latents
                } else {
                    base
                }
            }
            _ => 0,
        }
    }

    /// Number of alphabet symbols per label (table decoders only).
    pub fn preimage_counts(&self) -> Option<Vec<usize>> {
        match self {
            Self::Table { labels, latents } => {
                let mut counts = vec![0; *latents];
                labels.iter().for_each(|&l| counts[l] += 1);
                Some(counts)
            }
            _ => None,
        }
    }
}

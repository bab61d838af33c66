use serde::{Deserialize, Serialize};

/// Joint action space of `M` players, indexed row-major with player 0 most
/// significant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<usize>", into = "Vec<usize>")]
pub struct ActionSpace {
    counts: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl From<Vec<usize>> for ActionSpace {
    fn from(counts: Vec<usize>) -> Self {
        Self::new(counts)
    }
}

impl From<ActionSpace> for Vec<usize> {
    fn from(space: ActionSpace) -> Self {
        space.counts
    }
}

impl ActionSpace {
    pub fn new(counts: Vec<usize>) -> Self {
        assert!(!counts.is_empty(), "at least one player");
        assert!(counts.iter().all(|&c| c > 0), "action counts must be positive");
        let mut strides = vec![1; counts.len()];
        for i in (0..counts.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        let size = counts.iter().product();
        Self {
            counts,
            strides,
            size,
        }
    }

    pub fn uniform(players: usize, actions: usize) -> Self {
        Self::new(vec![actions; players])
    }

    /// Number of joint actions `A`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn players(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, player: usize) -> usize {
        self.counts[player]
    }

    /// Largest individual action set.
    pub fn max_count(&self) -> usize {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn encode(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.counts.len());
        actions
            .iter()
            .zip(&self.strides)
            .map(|(&a, &s)| a * s)
            .sum()
    }

    pub fn decode(&self, joint: usize) -> Vec<usize> {
        (0..self.players()).map(|i| self.action_of(joint, i)).collect()
    }

    #[inline]
    pub fn action_of(&self, joint: usize, player: usize) -> usize {
        (joint / self.strides[player]) % self.counts[player]
    }

    /// Replace player `player`'s component of `joint` by `action`.
    #[inline]
    pub fn with_action(&self, joint: usize, player: usize, action: usize) -> usize {
        let current = self.action_of(joint, player);
        joint - current * self.strides[player] + action * self.strides[player]
    }

    /// Product distribution from per-player marginals.
    pub fn product(&self, marginals: &[Vec<f64>]) -> Vec<f64> {
        (0..self.size)
            .map(|a| {
                marginals
                    .iter()
                    .enumerate()
                    .map(|(i, m)| m[self.action_of(a, i)])
                    .product()
            })
            .collect()
    }

    /// Marginal of `player` under a joint distribution.
    pub fn marginal(&self, dist: &[f64], player: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.counts[player]];
        for (a, &p) in dist.iter().enumerate() {
            out[self.action_of(a, player)] += p;
        }
        out
    }

    pub fn uniform_distribution(&self) -> Vec<f64> {
        vec![1.0 / self.size as f64; self.size]
    }
}

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// What a learner sees: a categorical symbol or a real vector.
///
/// Equality, hashing and ordering compare vector entries by bit pattern so
/// observations can key caches and ordered maps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observation {
    Symbol(usize),
    Vector(Vec<f64>),
}

impl Observation {
    pub fn symbol(&self) -> Option<usize> {
        match self {
            Self::Symbol(s) => Some(*s),
            Self::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Self::Symbol(_) => None,
            Self::Vector(v) => Some(v),
        }
    }

    /// Stable 64-bit digest used for hashed decoy assignments.
    pub(crate) fn digest(&self, salt: u64) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325_u64 ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut mix = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0100_0000_01b3);
            h ^= h >> 29;
        };
        match self {
            Self::Symbol(s) => mix(*s as u64),
            Self::Vector(v) => v.iter().for_each(|x| mix(x.to_bits())),
        }
        h
    }
}

impl PartialEq for Observation {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Observation {}

impl Hash for Observation {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Self::Symbol(s) => {
                0u8.hash(state);
                s.hash(state);
            }
            Self::Vector(v) => {
                1u8.hash(state);
                for x in v {
                    x.to_bits().hash(state);
                }
            }
        }
    }
}

impl Ord for Observation {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Self::Symbol(a), Self::Symbol(b)) => a.cmp(b),
            (Self::Symbol(_), Self::Vector(_)) => Ordering::Less,
            (Self::Vector(_), Self::Symbol(_)) => Ordering::Greater,
            (Self::Vector(a), Self::Vector(b)) => a
                .iter()
                .map(|x| x.to_bits())
                .cmp(b.iter().map(|x| x.to_bits())),
        }
    }
}

impl PartialOrd for Observation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Symbol(s) => write!(f, "#{s}"),
            Self::Vector(v) => {
                write!(f, "[")?;
                for (k, x) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x:.3}")?;
                }
                write!(f, "]")
            }
        }
    }
}

//! Versioned JSON documents for environments and policies.
//!
//! Floats are written with shortest round-trip formatting, so a document
//! read back and written again is byte-identical and every array entry is
//! bit-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::envs::{gen_block, gen_factored, gen_tabular, ClassSpec, EnvSpec, FactoredEnv, FactoredGame, Family};
use crate::error::{GerlError, Result};
use crate::game::{BlockEnv, Emission, LatentGame, Observation, PolicyKind, TabularObsPolicy};
use crate::meta::LearnedPolicy;
use crate::planner::LsviPolicy;
use crate::space::ActionSpace;

pub const ENV_FORMAT: &str = "gerl-env";
pub const POLICY_FORMAT: &str = "gerl-policy";
pub const FORMAT_VERSION: u32 = 1;

/// A loaded environment.
#[derive(Debug, Clone)]
pub enum Environment {
    Block(BlockEnv),
    Factored(FactoredEnv),
}

impl Environment {
    /// Generate the environment described by `spec`. Tabular games are
    /// wrapped in an identity emission so every family runs through the
    /// same simulator.
    pub fn generate(spec: &EnvSpec) -> Result<Self> {
        match spec.family {
            Family::Block => Ok(Self::Block(gen_block(spec)?)),
            Family::Factored => Ok(Self::Factored(gen_factored(spec)?)),
            Family::Tabular => {
                let game = gen_tabular(spec)?;
                let n = game.num_latents;
                let emission = Emission::Categorical {
                    per_latent: 1,
                    symbols: vec![(0..n).collect(); game.horizon + 1],
                };
                Ok(Self::Block(BlockEnv::new(game, emission, spec.seed)?))
            }
        }
    }

    pub fn block(&self) -> &BlockEnv {
        match self {
            Self::Block(env) => env,
            Self::Factored(env) => &env.block,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EmissionDoc {
    Categorical { per_latent: usize, symbols: Vec<Vec<usize>> },
    Hadamard { dim: usize, sigma: f64, eval_samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDoc {
    pub local_states: usize,
    pub neighborhoods: Vec<Vec<usize>>,
    /// `[h][i]`, each flattened `[x][a_i][s_i']`.
    pub factors: Vec<Vec<Vec<f64>>>,
}

/// On-disk environment. Arrays are dense and row-major: transitions
/// `[h][z][a][z']`, rewards `[h][i][z][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDoc {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub horizon: usize,
    pub latents: usize,
    pub players: usize,
    pub actions: Vec<usize>,
    pub init: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub emission: EmissionDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factored: Option<FactorDoc>,
    /// Generator settings, when the environment came from [`Environment::generate`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<EnvSpec>,
    /// Candidate class settings; classes are regenerated from these and the
    /// environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<ClassSpec>,
}

impl EnvDoc {
    pub fn from_env(env: &Environment, spec: Option<EnvSpec>, classes: Option<ClassSpec>) -> Self {
        let block = env.block();
        let game = block.latent();
        let emission = match block.emission() {
            Emission::Categorical { per_latent, symbols } => EmissionDoc::Categorical {
                per_latent: *per_latent,
                symbols: symbols.clone(),
            },
            Emission::Hadamard { dim, sigma, eval_samples } => EmissionDoc::Hadamard {
                dim: *dim,
                sigma: *sigma,
                eval_samples: *eval_samples,
            },
        };
        let factored = match env {
            Environment::Block(_) => None,
            Environment::Factored(f) => Some(FactorDoc {
                local_states: f.game.local_states,
                neighborhoods: f.game.neighborhoods.clone(),
                factors: f.game.factors.clone(),
            }),
        };
        Self {
            format: ENV_FORMAT.into(),
            version: FORMAT_VERSION,
            seed: block.seed(),
            horizon: game.horizon,
            latents: game.num_latents,
            players: game.players(),
            actions: game.actions.counts().to_vec(),
            init: game.init.clone(),
            transitions: game.transitions.clone(),
            rewards: game.rewards.clone(),
            emission,
            factored,
            spec,
            classes,
        }
    }

    pub fn to_env(&self) -> Result<Environment> {
        check_header(&self.format, self.version, ENV_FORMAT)?;
        if self.actions.len() != self.players {
            return Err(GerlError::Dimension(format!(
                "{} action counts for {} players",
                self.actions.len(),
                self.players
            )));
        }
        let actions = ActionSpace::new(self.actions.clone());
        let latent = LatentGame {
            horizon: self.horizon,
            num_latents: self.latents,
            actions: actions.clone(),
            transitions: self.transitions.clone(),
            rewards: self.rewards.clone(),
            init: self.init.clone(),
        };
        let emission = match &self.emission {
            EmissionDoc::Categorical { per_latent, symbols } => Emission::Categorical {
                per_latent: *per_latent,
                symbols: symbols.clone(),
            },
            EmissionDoc::Hadamard { dim, sigma, eval_samples } => Emission::Hadamard {
                dim: *dim,
                sigma: *sigma,
                eval_samples: *eval_samples,
            },
        };
        match &self.factored {
            None => Ok(Environment::Block(BlockEnv::new(latent, emission, self.seed)?)),
            Some(f) => {
                let game = FactoredGame {
                    horizon: self.horizon,
                    local_states: f.local_states,
                    actions,
                    neighborhoods: f.neighborhoods.clone(),
                    factors: f.factors.clone(),
                    rewards: self.rewards.clone(),
                    init: self.init.clone(),
                };
                let env = FactoredEnv::new(game, self.seed)?;
                if env.block.latent() != &latent || env.block.emission() != &emission {
                    return Err(GerlError::InvalidGame(
                        "joint arrays disagree with the per-player factors".into(),
                    ));
                }
                Ok(Environment::Factored(env))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(GerlError::Parse(format!("expected a '{expected}' document, found '{format}'")));
    }
    if version != FORMAT_VERSION {
        return Err(GerlError::Parse(format!(
            "unsupported {expected} version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsEntry {
    pub obs: Observation,
    pub dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PolicyBody {
    Tabular {
        kind: PolicyKind,
        num_actions: usize,
        steps: Vec<Vec<ObsEntry>>,
    },
    Lsvi(LsviPolicy),
}

/// Hashes identifying the experiment that produced an output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub manifest_sha256: String,
    /// Git blob hash of the environment file.
    pub env_sha1: String,
}

/// On-disk policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDoc {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub policy: PolicyBody,
}

impl PolicyDoc {
    pub fn from_policy(policy: &LearnedPolicy) -> Self {
        let body = match policy {
            LearnedPolicy::Tabular(p) => PolicyBody::Tabular {
                kind: p.kind,
                num_actions: p.num_actions,
                steps: p
                    .steps
                    .iter()
                    .map(|m| {
                        m.iter()
                            .map(|(obs, dist)| ObsEntry {
                                obs: obs.clone(),
                                dist: dist.clone(),
                            })
                            .collect()
                    })
                    .collect(),
            },
            LearnedPolicy::Lsvi(p) => PolicyBody::Lsvi(p.clone()),
        };
        Self {
            format: POLICY_FORMAT.into(),
            version: FORMAT_VERSION,
            provenance: None,
            policy: body,
        }
    }

    pub fn to_policy(&self) -> Result<LearnedPolicy> {
        check_header(&self.format, self.version, POLICY_FORMAT)?;
        match &self.policy {
            PolicyBody::Tabular { kind, num_actions, steps } => {
                let mut p = TabularObsPolicy::new(*kind, steps.len(), *num_actions);
                for (h, entries) in steps.iter().enumerate() {
                    for e in entries {
                        p.insert(h, e.obs.clone(), e.dist.clone())?;
                    }
                }
                Ok(LearnedPolicy::Tabular(p))
            }
            PolicyBody::Lsvi(p) => {
                if p.tables.iter().flatten().any(|d| d.len() != p.num_actions) {
                    return Err(GerlError::Dimension("policy table entry has the wrong action count".into()));
                }
                Ok(LearnedPolicy::Lsvi(p.clone()))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Content hash of `bytes` as git stores a blob: `sha1("blob <len>\0" ++ bytes)`.
pub fn git_blob_sha1(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::ObsMode;

    #[test]
    fn blob_hash_matches_git() {
        // values from `git hash-object --stdin`
        assert_eq!(git_blob_sha1(b"hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
        assert_eq!(git_blob_sha1(b""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    }

    #[test]
    fn hadamard_env_round_trips() {
        let spec = EnvSpec {
            obs_mode: ObsMode::Hadamard,
            seed: 9,
            ..EnvSpec::default()
        };
        let env = Environment::generate(&spec).unwrap();
        let doc = EnvDoc::from_env(&env, Some(spec), None);
        let text = doc.to_json().unwrap();
        let back = EnvDoc::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json().unwrap(), text);
        assert_eq!(back.to_env().unwrap().block(), env.block());
    }

    #[test]
    fn wrong_format_is_rejected() {
        let env = Environment::generate(&EnvSpec::default()).unwrap();
        let mut doc = EnvDoc::from_env(&env, None, None);
        doc.format = POLICY_FORMAT.into();
        assert!(matches!(doc.to_env(), Err(GerlError::Parse(_))));
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consistent::SequenceKind;
use crate::error::{Error, Result};
use crate::experiments::{TaskSpec, TrainConfig};
use crate::harness::{Reference, SamplerSpec};
use crate::models::ModelSpec;

/// Settings for `compat`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompatConfig {
    #[serde(default = "d_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "d_multiples")]
    pub multiples: Vec<usize>,
    #[serde(default = "d_trials")]
    pub trials: usize,
}

fn d_sizes() -> Vec<usize> {
    vec![4, 8, 16, 32]
}
fn d_multiples() -> Vec<usize> {
    vec![2, 3, 4]
}
fn d_trials() -> usize {
    20
}
fn d_runs() -> usize {
    10
}

impl Default for CompatConfig {
    fn default() -> Self {
        Self {
            sizes: d_sizes(),
            multiples: d_multiples(),
            trials: d_trials(),
        }
    }
}

/// Settings for `transfer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub sizes: Vec<usize>,
    pub trials: usize,
    #[serde(default = "d_reference")]
    pub reference: Reference,
    /// Replaces `reference` by the mean-field limit from this many quadrature
    /// nodes (normalized DeepSet only).
    #[serde(default)]
    pub mean_field_nodes: Option<usize>,
}

fn d_reference() -> Reference {
    Reference::LargestSize
}

/// Settings for `sizegen`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizegenConfig {
    #[serde(default = "d_runs")]
    pub runs: usize,
    /// Picks the hidden width closest to this many parameters.
    #[serde(default)]
    pub param_budget: Option<usize>,
    /// Directory for dataset cache files.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for SizegenConfig {
    fn default() -> Self {
        Self {
            runs: d_runs(),
            param_budget: None,
            cache_dir: None,
        }
    }
}

/// The JSON document every subcommand reads. Sections not used by a command
/// may be present; unknown keys anywhere are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Trained parameters to load instead of a seeded initialization.
    #[serde(default)]
    pub params: Option<PathBuf>,
    #[serde(default)]
    pub seq: Option<SequenceKind>,
    #[serde(default)]
    pub compat: Option<CompatConfig>,
    #[serde(default)]
    pub sampler: Option<SamplerSpec>,
    #[serde(default)]
    pub transfer: Option<TransferConfig>,
    #[serde(default)]
    pub task: Option<TaskSpec>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub sizegen: Option<SizegenConfig>,
}

impl RunConfig {
    /// Parses and validates; errors name the JSON path of the offending value.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |path: &str, r: Result<()>| {
            r.map_err(|e| Error::Config {
                path: path.into(),
                message: e.to_string(),
            })
        };
        if let Some(m) = &self.model {
            wrap("model", m.validate())?;
        }
        if let Some(s) = &self.sampler {
            wrap("sampler", s.validate())?;
        }
        if let Some(t) = &self.task {
            wrap("task", t.validate())?;
        }
        if let Some(t) = &self.train {
            wrap("train", t.validate())?;
        }
        if let Some(c) = &self.compat {
            if c.sizes.is_empty() || c.multiples.is_empty() || c.trials == 0 || c.sizes.contains(&0) || c.multiples.contains(&0) {
                return Err(Error::Config {
                    path: "compat".into(),
                    message: "sizes, multiples and trials must be nonempty and positive".into(),
                });
            }
        }
        if let Some(t) = &self.transfer {
            if t.sizes.is_empty() || t.trials == 0 || t.sizes.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config {
                    path: "transfer".into(),
                    message: "sizes must be strictly increasing and trials positive".into(),
                });
            }
        }
        Ok(())
    }

    pub fn require<'a, T>(&self, v: &'a Option<T>, path: &str) -> Result<&'a T> {
        v.as_ref().ok_or_else(|| Error::Config {
            path: path.into(),
            message: "missing section".into(),
        })
    }
}

//! Run configuration documents (TOML).

use std::path::PathBuf;

use mae_core::datasets::Hole;
use mae_core::metrics::{DEFAULT_K_EVAL, DEFAULT_SIGMAS};
use mae_core::{Activation, LocalMode, LossWeights, Schedule, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub loss: LossWeights,
    #[serde(default)]
    pub schedule: Schedule,
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    SwissRoll {
        n_points: usize,
        seed: u64,
        #[serde(default)]
        holes: HolesConfig,
    },
    ToroidalHelix {
        n_points: usize,
        seed: u64,
        #[serde(default = "default_major_radius")]
        major_radius: f64,
        #[serde(default = "default_minor_radius")]
        minor_radius: f64,
        #[serde(default = "default_windings")]
        windings: usize,
    },
    /// External table; relative paths resolve against the config's directory.
    Csv {
        path: PathBuf,
        #[serde(default)]
        intrinsic_dims: usize,
    },
}

fn default_major_radius() -> f64 {
    2.0
}

fn default_minor_radius() -> f64 {
    1.0
}

fn default_windings() -> usize {
    8
}

impl DatasetConfig {
    /// Ambient dimension when known without reading any file.
    pub fn ambient_dim(&self) -> Option<usize> {
        match self {
            DatasetConfig::SwissRoll { .. } | DatasetConfig::ToroidalHelix { .. } => Some(3),
            DatasetConfig::Csv { .. } => None,
        }
    }

    pub fn n_points(&self) -> Option<usize> {
        match self {
            DatasetConfig::SwissRoll { n_points, .. } | DatasetConfig::ToroidalHelix { n_points, .. } => {
                Some(*n_points)
            }
            DatasetConfig::Csv { .. } => None,
        }
    }
}

/// `"default"`, `"none"`, or an explicit list of disks in `(t, h)` units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HolesConfig {
    Named(HolePreset),
    List(Vec<HoleSpec>),
}

impl Default for HolesConfig {
    fn default() -> Self {
        HolesConfig::Named(HolePreset::Default)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HolePreset {
    Default,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleSpec {
    pub center: [f64; 2],
    pub radius: f64,
}

impl HolesConfig {
    pub fn holes(&self) -> Vec<Hole> {
        match self {
            HolesConfig::Named(HolePreset::Default) => Hole::default_pair().to_vec(),
            HolesConfig::Named(HolePreset::None) => Vec::new(),
            HolesConfig::List(list) => list
                .iter()
                .map(|h| Hole {
                    center: h.center,
                    radius: h.radius,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    /// Encoder widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default = "default_k_neighbors")]
    pub k_neighbors: usize,
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn default_batch_size() -> usize {
    128
}

fn default_k_neighbors() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub k_eval: usize,
    pub sigmas: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_eval: DEFAULT_K_EVAL,
            sigmas: DEFAULT_SIGMAS.to_vec(),
        }
    }
}

/// Command-line values that take precedence over the document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub local_mode: Option<LocalMode>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }

    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(mode) = self.local_mode {
            config.loss.local_mode = mode;
        }
        if let Some(epochs) = self.epochs {
            config.train.epochs = epochs;
        }
        if let Some(seed) = self.seed {
            config.train.seed = seed;
        }
    }
}

impl RunConfig {
    /// Parses without validating; see [`RunConfig::validate`].
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::ConfigSyntax {
            path: origin.to_string(),
            reason: e.to_string(),
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            weights: self.loss,
            schedule: self.schedule,
            seed: self.train.seed,
            k_neighbors: self.train.k_neighbors,
            checkpoint_every: self.train.checkpoint_every,
        }
    }

    /// Every offending field, by name.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .train_config()
            .problems()
            .into_iter()
            .map(|(f, r)| (f.to_string(), r))
            .collect();
        let mut push = |field: &str, reason: &str| out.push((field.to_string(), reason.to_string()));

        match &self.dataset {
            DatasetConfig::SwissRoll { holes, .. } => {
                for h in holes.holes() {
                    if !(h.radius.is_finite() && h.radius > 0.0) || !h.center.iter().all(|c| c.is_finite()) {
                        push("holes", "need finite centers and positive radii");
                        break;
                    }
                }
            }
            DatasetConfig::ToroidalHelix {
                major_radius,
                minor_radius,
                windings,
                ..
            } => {
                if !(major_radius.is_finite() && *major_radius > 0.0) {
                    push("major_radius", "must be positive");
                }
                if !(minor_radius.is_finite() && *minor_radius > 0.0) {
                    push("minor_radius", "must be positive");
                }
                if *windings < 1 {
                    push("windings", "must be at least 1");
                }
            }
            DatasetConfig::Csv { .. } => {}
        }
        if let Some(n) = self.dataset.n_points() {
            if n <= self.train.k_neighbors || n <= self.eval.k_eval {
                push("n_points", "must exceed k_neighbors and k_eval");
            }
        }

        if self.model.latent_dim < 1 {
            push("latent_dim", "must be at least 1");
        } else if let Some(ambient) = self.dataset.ambient_dim() {
            if self.model.latent_dim >= ambient {
                push("latent_dim", "must be smaller than the ambient dimension");
            }
        }
        if self.model.hidden.contains(&0) {
            push("hidden", "widths must be positive");
        }

        if self.eval.k_eval < 1 {
            push("k_eval", "must be at least 1");
        }
        if self.eval.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            push("sigmas", "must be positive");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }
}

//! Experiment configuration: flat key-value TOML with a strict schema.
//!
//! Unknown keys are rejected at parse time so sweep definitions cannot
//! silently typo a field. See the crate README for the documented schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::MlpSpec;
use crate::regularizers::{RegKind, RegularizerSpec};
use crate::sampler::{SamplerConfig, SamplerMode};
use crate::trainer::{LrMode, SplitSpec, TrainConfig};

use super::dataset::Dataset;
use super::idx::load_idx;
use super::synth::{synth_dataset, SynthSpec};

/// Default sweep grid for the regularizer weight.
pub const DEFAULT_OMEGA_GRID: [f64; 10] = [
    1e-6, 1e-5, 1e-4, 1e-3, 0.01, 0.1, 1.0, 5.0, 10.0, 100.0,
];

fn default_dropout() -> f64 {
    0.0
}
fn default_alpha_beta() -> f64 {
    0.5
}
fn default_sample_percent() -> f64 {
    0.5
}
fn default_batch_size() -> usize {
    256
}
fn default_max_epochs() -> usize {
    1200
}
fn default_patience() -> usize {
    20
}
fn default_momentum() -> f64 {
    0.9
}
fn default_alpha0() -> f64 {
    0.01
}
fn default_fixed_rate() -> f64 {
    0.001
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_train_frac() -> f64 {
    0.8
}
fn default_val_frac() -> f64 {
    0.2
}
fn default_output_dir() -> String {
    "runs".into()
}
fn default_omega_grid() -> Vec<f64> {
    DEFAULT_OMEGA_GRID.to_vec()
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrModeName {
    #[default]
    Schedule,
    Fixed,
}

/// Where the data comes from.
#[derive(Debug, Clone)]
pub enum DatasetSource {
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Synth(SynthSpec),
}

/// Full experiment description loaded from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network_id: String,
    /// `"mnist"` (IDX files) or `"synth"` (Gaussian blobs).
    pub dataset: String,

    pub train_images: Option<String>,
    pub train_labels: Option<String>,
    pub test_images: Option<String>,
    pub test_labels: Option<String>,

    pub synth_classes: Option<usize>,
    pub synth_per_class: Option<usize>,
    pub synth_dims: Option<usize>,
    pub synth_seed: Option<u64>,
    pub synth_separation: Option<f64>,

    pub hidden_layers: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout_prob: f64,

    #[serde(default)]
    pub regularizer: RegKind,
    #[serde(default = "default_alpha_beta")]
    pub alpha: f64,
    #[serde(default = "default_alpha_beta")]
    pub beta: f64,
    #[serde(default)]
    pub sampler: SamplerMode,
    #[serde(default = "default_sample_percent")]
    pub sample_percent: f64,

    /// Weight for the `train` subcommand.
    #[serde(default)]
    pub omega: f64,
    /// Weights for the `sweep` subcommand.
    #[serde(default = "default_omega_grid")]
    pub omega_grid: Vec<f64>,
    /// Prepend an `omega = 0` baseline run to every sweep.
    #[serde(default = "default_true")]
    pub include_baseline: bool,

    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub lr_mode: LrModeName,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_fixed_rate")]
    pub fixed_rate: f64,

    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_val_frac")]
    pub val_frac: f64,

    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Sweep worker count; 0 means one worker per run up to the CPU count.
    /// The `PERSREG_WORKERS` environment variable overrides this.
    #[serde(default)]
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::InvalidConfig(
                "hidden_layers must be nonempty with every width >= 1".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must be nonempty".into()));
        }
        if self.omega < 0.0 || self.omega_grid.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidConfig("omega values must be >= 0".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be >= 2".into()));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "patience and max_epochs must be >= 1".into(),
            ));
        }
        if !(self.train_frac > 0.0
            && self.val_frac > 0.0
            && self.train_frac + self.val_frac <= 1.0)
        {
            return Err(Error::InvalidConfig(format!(
                "split fractions ({}, {}) invalid",
                self.train_frac, self.val_frac
            )));
        }
        if self.sampler == SamplerMode::Importance
            && !(self.sample_percent > 0.0 && self.sample_percent <= 100.0)
        {
            return Err(Error::InvalidConfig(format!(
                "sample_percent {} outside (0, 100]",
                self.sample_percent
            )));
        }
        self.source().map(|_| ())
    }

    /// Resolves the dataset source, checking that every named path exists.
    pub fn source(&self) -> Result<DatasetSource> {
        match self.dataset.as_str() {
            "mnist" => {
                let get = |field: &Option<String>, name: &str| -> Result<PathBuf> {
                    let raw = field.as_ref().ok_or_else(|| {
                        Error::InvalidConfig(format!("dataset \"mnist\" requires `{name}`"))
                    })?;
                    let path = PathBuf::from(raw);
                    if !path.exists() {
                        return Err(Error::InvalidConfig(format!(
                            "{name} path does not exist: {}",
                            path.display()
                        )));
                    }
                    Ok(path)
                };
                Ok(DatasetSource::Mnist {
                    train_images: get(&self.train_images, "train_images")?,
                    train_labels: get(&self.train_labels, "train_labels")?,
                    test_images: get(&self.test_images, "test_images")?,
                    test_labels: get(&self.test_labels, "test_labels")?,
                })
            }
            "synth" => Ok(DatasetSource::Synth(SynthSpec {
                classes: self.synth_classes.unwrap_or(2),
                per_class: self.synth_per_class.unwrap_or(100),
                dims: self.synth_dims.unwrap_or(2),
                seed: self.synth_seed.unwrap_or(0),
                separation: self.synth_separation.unwrap_or(6.0),
            })),
            other => Err(Error::InvalidConfig(format!(
                "unknown dataset \"{other}\" (expected \"mnist\" or \"synth\")"
            ))),
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match self.source()? {
            DatasetSource::Synth(spec) => synth_dataset(&spec),
            DatasetSource::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                let train = load_idx(&train_images, &train_labels)?;
                let test = load_idx(&test_images, &test_labels)?;
                let feature_dim = train.features.ncols();
                let class_count = train
                    .labels
                    .iter()
                    .chain(&test.labels)
                    .copied()
                    .max()
                    .map_or(0, |m| m + 1);
                let dataset = Dataset {
                    name: "mnist".into(),
                    feature_dim,
                    class_count,
                    train,
                    test,
                };
                dataset.validate()?;
                Ok(dataset)
            }
        }
    }

    /// Assembles the per-run training config for one `(omega, seed)` cell.
    pub fn train_config(&self, dataset: &Dataset, omega: f64, seed: u64) -> TrainConfig {
        let mlp = MlpSpec {
            input_dim: dataset.feature_dim,
            hidden_layers: self.hidden_layers.clone(),
            output_dim: dataset.class_count,
            activation: Default::default(),
            dropout_prob: self.dropout_prob,
        };
        TrainConfig {
            network_id: self.network_id.clone(),
            mlp,
            regularizer: RegularizerSpec {
                kind: self.regularizer,
                omega,
                alpha: self.alpha,
                beta: self.beta,
                sample_percent: self.sample_percent,
            },
            sampler: SamplerConfig {
                mode: self.sampler,
                percent: self.sample_percent,
            },
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            momentum: self.momentum,
            lr: match self.lr_mode {
                LrModeName::Schedule => LrMode::Schedule {
                    alpha0: self.alpha0,
                },
                LrModeName::Fixed => LrMode::Fixed {
                    rate: self.fixed_rate,
                },
            },
            seed,
            split: SplitSpec::Fractions {
                train_frac: self.train_frac,
                val_frac: self.val_frac,
            },
            trace_batches: false,
        }
    }

    /// Sweep grid including the baseline when configured.
    pub fn sweep_grid(&self) -> Vec<f64> {
        let mut grid = Vec::new();
        if self.include_baseline {
            grid.push(0.0);
        }
        grid.extend(self.omega_grid.iter().copied());
        grid
    }

    /// Worker count after the `PERSREG_WORKERS` override.
    pub fn effective_workers(&self) -> usize {
        match std::env::var("PERSREG_WORKERS") {
            Ok(v) => v.parse().unwrap_or(self.workers),
            Err(_) => self.workers,
        }
    }

    /// Hex SHA-256 over the canonical JSON of every semantically meaningful
    /// field (`output_dir` and `workers` do not affect results and are
    /// excluded).
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("workers");
        }
        let json = serde_json::to_string(&value).expect("value serializes");
        let mut hasher = <sha2::Sha256 as sha2::Digest>::new();
        sha2::Digest::update(&mut hasher, json.as_bytes());
        sha2::Digest::finalize(hasher)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

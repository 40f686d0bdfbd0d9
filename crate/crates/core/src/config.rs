//! Run configuration shared by every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{SplitCounts, SynthConfig, Task};
use crate::encoder::EncoderDims;
use crate::graph::DEFAULT_PHI;
use crate::hyperbolic::HyperbolicConfig;
use crate::training::schedule::LrSchedule;
use crate::training::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Ontology edge CSV; defaults to `<out>/ontology.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ontology: Option<PathBuf>,
    /// Dataset JSON; defaults to `<out>/dataset.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            ontology: None,
            dataset: None,
            out: PathBuf::from("runs/default"),
        }
    }
}

/// Optional overrides on top of the task defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<LrSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_dropout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder_dropout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, base: TrainConfig) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            schedule: self.schedule.clone().unwrap_or(base.schedule),
            graph_dropout: self.graph_dropout.unwrap_or(base.graph_dropout),
            decoder_dropout: self.decoder_dropout.unwrap_or(base.decoder_dropout),
            early_stopping: self.early_stopping.or(base.early_stopping),
        }
    }

    fn from_config(c: &TrainConfig) -> Self {
        Self {
            epochs: Some(c.epochs),
            batch_size: Some(c.batch_size),
            schedule: Some(c.schedule.clone()),
            graph_dropout: Some(c.graph_dropout),
            decoder_dropout: Some(c.decoder_dropout),
            early_stopping: c.early_stopping,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Random `E` instead of hyperbolic pre-training.
    pub no_hyperbolic: bool,
    /// Flat decoder over the last level only.
    pub no_hierarchy: bool,
    /// Skip self-supervised training.
    pub no_ssl: bool,
    /// Skip the GNN; codes enter attention as `E`.
    pub no_graph: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub threshold: f64,
    /// Outputs listed per trace.
    pub trace_top_k: usize,
    /// Test patients traced by `explain`.
    pub trace_patients: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![10, 20],
            threshold: 0.5,
            trace_top_k: 5,
            trace_patients: 10,
        }
    }
}

fn default_task() -> Task {
    Task::Diagnosis
}
fn default_phi() -> f64 {
    DEFAULT_PHI
}
fn default_strict() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: Paths,
    #[serde(default = "default_task")]
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    /// Synthetic corpus settings; when absent `gen-synth` uses defaults
    /// seeded with `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub hyperbolic: HyperbolicConfig,
    #[serde(default)]
    pub encoder: EncoderDims,
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default)]
    pub split: SplitCounts,
    #[serde(default)]
    pub ssl: TrainOverrides,
    #[serde(default)]
    pub finetune: TrainOverrides,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub ablation: Ablation,
    /// Reject dataset codes missing from the ontology.
    #[serde(default = "default_strict")]
    pub strict_codes: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

/// Graph-layer and decoder dropout for fine-tuning.
fn task_dropout(task: Task) -> (f64, f64) {
    match task {
        Task::Diagnosis => (0.2, 0.02),
        Task::HeartFailure => (0.8, 0.15),
    }
}

pub fn default_ssl() -> TrainConfig {
    TrainConfig {
        epochs: 1000,
        batch_size: 128,
        schedule: LrSchedule::step(0.01, &[100, 500], 0.1),
        graph_dropout: 0.0,
        decoder_dropout: 0.0,
        early_stopping: None,
    }
}

pub fn default_finetune(task: Task) -> TrainConfig {
    let (graph_dropout, decoder_dropout) = task_dropout(task);
    let breakpoints: &[usize] = match task {
        Task::Diagnosis => &[20, 35, 100],
        Task::HeartFailure => &[25, 40, 45],
    };
    TrainConfig {
        epochs: 200,
        batch_size: 32,
        schedule: LrSchedule::step(0.01, breakpoints, 0.1),
        graph_dropout,
        decoder_dropout,
        early_stopping: None,
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn ssl_config(&self) -> TrainConfig {
        self.ssl.apply(default_ssl())
    }

    pub fn finetune_config(&self) -> TrainConfig {
        self.finetune.apply(default_finetune(self.task))
    }

    pub fn synth_config(&self) -> SynthConfig {
        self.synth.clone().unwrap_or_else(|| SynthConfig::with_seed(self.seed))
    }

    pub fn ontology_path(&self) -> PathBuf {
        self.paths.ontology.clone().unwrap_or_else(|| self.paths.out.join("ontology.csv"))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.paths.dataset.clone().unwrap_or_else(|| self.paths.out.join("dataset.json"))
    }

    /// Every default filled in, so the file alone reproduces the run.
    pub fn resolved(&self) -> Self {
        let mut r = self.clone();
        r.ssl = TrainOverrides::from_config(&self.ssl_config());
        r.finetune = TrainOverrides::from_config(&self.finetune_config());
        r.synth = Some(self.synth_config());
        r
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.hyperbolic.validate().map_err(|e| inv(&e))?;
        self.ssl_config().validate().map_err(|e| inv(&e))?;
        self.finetune_config().validate().map_err(|e| inv(&e))?;
        self.synth_config().validate().map_err(|e| inv(&e))?;
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(ConfigError::Invalid(format!("phi = {} outside (0, 1)", self.phi)));
        }
        let d = &self.encoder;
        if d.hidden == 0 || d.patient == 0 || d.code_attention == 0 || d.admission_attention == 0 {
            return Err(ConfigError::Invalid("encoder widths must be positive".into()));
        }
        if d.embed != self.hyperbolic.dim {
            return Err(ConfigError::Invalid(format!(
                "encoder.embed ({}) must equal hyperbolic.dim ({})",
                d.embed, self.hyperbolic.dim
            )));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(ConfigError::Invalid("eval.ks must be non-empty and positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the resolved config with paths removed, so the same
    /// settings hash identically wherever they run.
    pub fn hash(&self) -> String {
        let mut r = self.resolved();
        r.paths = Paths::default();
        let json = serde_json::to_vec(&r).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Independent per-stage seed derived from the run seed.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(stage.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

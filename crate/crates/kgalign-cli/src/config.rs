//! Run configuration: JSON file, defaults, and flag overrides.
//!
//! Every field is overridable by a command-line flag; flags win over the
//! config file. Genuinely contradictory combinations (for example resource
//! lists in a mode whose template cannot carry them) are errors that name
//! both sources.

use std::path::{Path, PathBuf};

use kgalign::alignment::{AlignmentConfig, TrainingMode};
use kgalign::bridge::TuneConfig;
use kgalign::encoders::EncoderConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset_dir: Option<PathBuf>,
    pub seed: u64,
    pub allow_unseen: bool,
    pub alignment: AlignmentSection,
    pub tuning: TuningSection,
    pub subgraph: SubgraphSection,
    pub icl: IclSection,
    pub backend: BackendSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_dir: None,
            seed: default_seed(),
            allow_unseen: false,
            alignment: AlignmentSection::default(),
            tuning: TuningSection::default(),
            subgraph: SubgraphSection::default(),
            icl: IclSection::default(),
            backend: BackendSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentSection {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f32,
    pub lr: f32,
    pub local_epochs: usize,
    pub global_epochs: usize,
    pub batch_size: usize,
    pub joint: bool,
    pub closure_cap: usize,
    pub max_text_len: usize,
}

impl Default for AlignmentSection {
    fn default() -> Self {
        Self {
            dim: 128,
            layers: 2,
            heads: 4,
            dropout: 0.1,
            lr: 1e-4,
            local_epochs: 20,
            global_epochs: 20,
            batch_size: 32,
            joint: false,
            closure_cap: 512,
            max_text_len: 256,
        }
    }
}

impl AlignmentSection {
    pub fn to_alignment_config(&self, seed: u64) -> AlignmentConfig {
        AlignmentConfig {
            encoder: EncoderConfig {
                dim: self.dim,
                layers: self.layers,
                heads: self.heads,
                dropout: self.dropout,
                feature_seed: seed,
                max_text_len: self.max_text_len,
            },
            lr: self.lr,
            local_epochs: self.local_epochs,
            global_epochs: self.global_epochs,
            batch_size: self.batch_size,
            mode: if self.joint {
                TrainingMode::Joint
            } else {
                TrainingMode::Sequential
            },
            seed,
            closure_cap: self.closure_cap,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub warmup_ratio: f32,
}

impl Default for TuningSection {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 2,
            lr: 2e-3,
            warmup_ratio: 3e-2,
        }
    }
}

impl TuningSection {
    pub fn to_tune_config(&self, seed: u64) -> TuneConfig {
        TuneConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            warmup_ratio: self.warmup_ratio,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SubgraphSection {
    pub hops: usize,
    pub node_cap: usize,
}

impl Default for SubgraphSection {
    fn default() -> Self {
        Self {
            hops: 2,
            node_cap: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IclSection {
    pub k: usize,
    pub pool_size: usize,
}

impl Default for IclSection {
    fn default() -> Self {
        Self { k: 3, pool_size: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub auth_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub concurrency: usize,
    pub soft_dim: usize,
    pub mock_gain: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "local-model".into(),
            auth_env: "KGALIGN_API_TOKEN".into(),
            timeout_secs: 30,
            max_retries: 3,
            concurrency: 4,
            soft_dim: 96,
            mock_gain: 4.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    UsageError(format!("cannot read config file {}: {e}", p.display()))
                })?;
                let cfg = serde_json::from_str(&text).map_err(|e| {
                    UsageError(format!("config file {} is invalid: {e}", p.display()))
                })?;
                Ok(cfg)
            }
        }
    }

    /// Canonical JSON used for hashing and manifests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

//! The language-model side of the pipeline: a knowledge adapter projecting
//! aligned graph embeddings into a backend's soft-token space, a split
//! capability contract over backends, adapter tuning, and answer parsing.
//!
//! Backends come in two shapes. [`MockBackend`] is fully deterministic and
//! differentiable with respect to slot vectors, so the tuning objective is
//! trainable and testable offline. [`HttpBackend`] speaks a chat-completions
//! JSON API and can only generate; prompts sent there carry entity names as
//! text because remote models cannot accept soft embeddings.

mod adapter;
mod http;
mod mock;
mod predict;

pub use adapter::{
    evaluate_adapter, tune_adapter, KnowledgeAdapter, TuneConfig, TuneReport, TuningPrompt,
};
pub use http::{HttpBackend, HttpConfig};
pub use mock::{MockBackend, MockConfig};
pub use predict::{
    normalize_answer, normalize_tc_answer, predict_lp, predict_tc, NameIndex, RankedAnswer,
    TcPrediction,
};

use thiserror::Error;

use crate::tensor::MathError;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend {0} cannot score prompts (generation-only)")]
    ScoreUnsupported(String),
    #[error("slot vector {index} has dimension {got}, backend expects {want}")]
    SlotDimMismatch {
        index: usize,
        got: usize,
        want: usize,
    },
    #[error("adapter input dimension {got} does not match embedding dimension {want}")]
    AdapterDimMismatch { got: usize, want: usize },
    #[error("http request failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("unexpected response payload: {0}")]
    BadResponse(String),
    #[error("auth token environment variable {0} is not set")]
    MissingAuth(String),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BackendError>;

/// A prompt as the backend sees it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
        }
    }

    pub fn combined(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

/// One generated answer with a backend-specific score; lists arrive sorted
/// descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub score: f64,
}

/// Negative log-likelihood of a target plus its gradient with respect to
/// each slot vector.
#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    pub nll: f64,
    pub slot_grads: Vec<Vec<f32>>,
}

/// Split capability contract over a language model.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Dimension of the soft-token space slot vectors live in.
    fn soft_dim(&self) -> usize;

    /// Whether `score` works; generation-only backends return false.
    fn supports_score(&self) -> bool;

    /// NLL of `target` given the prompt and slot vectors, with gradients
    /// for each slot vector.
    fn score(
        &self,
        prompt: &RenderedPrompt,
        slots: &[Vec<f32>],
        target: &str,
    ) -> Result<ScoreOutcome>;

    /// Up to `n` answers, best first. Deterministic for a fixed backend
    /// configuration.
    fn generate(
        &self,
        prompt: &RenderedPrompt,
        slots: &[Vec<f32>],
        n: usize,
    ) -> Result<Vec<Generation>>;

    /// Byte-stable digest of everything that defines the backend's
    /// behavior, for frozen-state comparisons.
    fn state_fingerprint(&self) -> Vec<u8>;
}

pub(crate) fn check_slot_dims(slots: &[Vec<f32>], want: usize) -> Result<()> {
    for (i, s) in slots.iter().enumerate() {
        if s.len() != want {
            return Err(BackendError::SlotDimMismatch {
                index: i,
                got: s.len(),
                want,
            });
        }
    }
    Ok(())
}

//! Graph and text encoders producing d-dimensional embeddings in a shared
//! space.
//!
//! The graph side is neighbor-masked multi-head attention with the relation
//! embedding of each connecting edge added to that neighbor's key and value.
//! The text side is a small transformer over a corpus-built word vocabulary.
//! Depth, head count and the neighbor restriction are explicit configuration,
//! not fidelity claims.

mod graph_encoder;
mod text_encoder;
mod vocab;

pub use graph_encoder::GraphEncoder;
pub use text_encoder::TextEncoder;
pub use vocab::{tokenize, Vocabulary, OOV_ID, OOV_TOKEN};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::MathError;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("dim {dim} is not divisible by {heads} heads")]
    BadHeadSplit { dim: usize, heads: usize },
    #[error("dropout {0} outside [0, 1)")]
    BadDropout(f32),
    #[error("subgraph node {0} is outside the feature table")]
    NodeOutsideTable(u32),
    #[error("relation {0} is outside the relation table")]
    RelationOutsideTable(u32),
    #[error("cannot encode an empty subgraph")]
    EmptySubgraph,
    #[error("vocabulary file line {line}: {msg}")]
    BadVocabFile { line: usize, msg: String },
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncodeError>;

/// Shared encoder hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Embedding dimension d.
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f32,
    /// Seed for node/relation feature initialization.
    pub feature_seed: u64,
    /// Text truncation length.
    pub max_text_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            layers: 2,
            heads: 4,
            dropout: 0.1,
            feature_seed: 0,
            max_text_len: 256,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim % self.heads != 0 {
            return Err(EncodeError::BadHeadSplit {
                dim: self.dim,
                heads: self.heads,
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(EncodeError::BadDropout(self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

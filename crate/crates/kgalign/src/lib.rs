//! Knowledge-graph completion toolkit built around graph/text embedding
//! alignment and instruction-style prompting.
//!
//! The pipeline, end to end:
//!
//! 1. [`kg`] loads triple datasets and builds entity/description pairs.
//! 2. [`graph`] indexes adjacency and extracts anchored k-hop subgraphs.
//! 3. [`tensor`] provides the dense-float math and reverse-mode gradients
//!    everything downstream trains with.
//! 4. [`encoders`] turn (sub)graphs and description text into d-dimensional
//!    embeddings.
//! 5. [`alignment`] trains both encoders contrastively so graph embeddings
//!    land in the text embedding space.
//! 6. [`instruction`] renders task prompts with graph-embedding slots and
//!    retrieves in-context examples.
//! 7. [`bridge`] projects aligned embeddings into a language-model backend's
//!    soft-token space, tunes that adapter, and runs predictions.
//! 8. [`eval`] scores triple classification and link prediction, and sweeps
//!    description-noise robustness.
//!
//! [`synthetic`] generates small planted-correspondence datasets used by the
//! test suites and as runnable demo input.

pub mod alignment;
pub mod bridge;
pub mod encoders;
pub mod eval;
pub mod graph;
pub mod instruction;
pub mod kg;
pub mod rng;
pub mod synthetic;
pub mod tensor;

pub use graph::{AdjacencyIndex, Subgraph};
pub use kg::{DatasetSplit, EntityId, KnowledgeGraph, RelationId, Triple};
pub use tensor::Tensor;

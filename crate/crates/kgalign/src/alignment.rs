//! Hierarchical alignment of graph and text embeddings.
//!
//! Two contrastive levels share one parameter set: node embeddings against
//! entity descriptions (local), pooled subgraph embeddings against source
//! documents (global). Both use a temperature-scaled similarity matrix with
//! diagonal targets and symmetric cross-entropy. The default schedule trains
//! the local level first, then the global level; a joint mode sums both
//! losses per step instead.
//!
//! Each local batch encodes the k-hop closure of its entities (k = encoder
//! depth), so a step never has to encode the whole graph. The full graph is
//! encoded exactly once, after training, to freeze the entity embedding
//! table.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{EncodeError, EncoderConfig, GraphEncoder, TextEncoder, Vocabulary};
use crate::graph::{build_index, extract_khop, GraphError, Subgraph};
use crate::kg::{KnowledgeGraph, NodeDescriptionPair, SubgraphDocumentPair};
use crate::rng::SeedTree;
use crate::tensor::{
    load_tensors, save_tensors, AdamState, MathError, ParamSet, Tape, Tensor, Var,
};

/// exp(tau) stays inside this range during training.
pub const TEMPERATURE_SCALE_RANGE: (f32, f32) = (1.0, 100.0);

pub const TAU_PARAM: &str = "align.tau";
const EMBEDDINGS_TENSOR: &str = "entity_embeddings";

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("embedding row {row} is not L2-normalized (norm {norm})")]
    NotNormalized { row: usize, norm: f32 },
    #[error("similarity inputs disagree: {lhs:?} vs {rhs:?}")]
    DimMismatch { lhs: [usize; 2], rhs: [usize; 2] },
    #[error("similarity matrix must be square, got {0:?}")]
    NonSquare([usize; 2]),
    #[error("need at least 2 local pairs, got {0}")]
    TooFewPairs(usize),
    #[error("contrastive batches need size >= 2, got {0}")]
    BatchTooSmall(usize),
    #[error("training diverged: loss became non-finite in {phase} epoch {epoch}")]
    Diverged { phase: &'static str, epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AlignError>;

// ---------------------------------------------------------------------------
// Similarity and loss
// ---------------------------------------------------------------------------

fn check_normalized(t: &Tensor) -> Result<()> {
    for r in 0..t.rows() {
        let norm: f32 = t.row(r).iter().map(|v| v * v).sum::<f32>().sqrt();
        if (norm - 1.0).abs() > 1e-4 {
            return Err(AlignError::NotNormalized { row: r, norm });
        }
    }
    Ok(())
}

/// Temperature-scaled similarity of row-normalized embedding batches:
/// (H D^T) * exp(tau).
pub fn similarity_matrix(graph_embs: &Tensor, text_embs: &Tensor, tau: f32) -> Result<Tensor> {
    if graph_embs.shape() != text_embs.shape() {
        return Err(AlignError::DimMismatch {
            lhs: graph_embs.shape(),
            rhs: text_embs.shape(),
        });
    }
    check_normalized(graph_embs)?;
    check_normalized(text_embs)?;
    let mut tape = Tape::new();
    let h = tape.constant(graph_embs.clone());
    let d = tape.constant(text_embs.clone());
    let tau_v = tape.constant(Tensor::scalar(tau));
    let out = similarity_into(&mut tape, h, d, tau_v)?;
    Ok(tape.value(out).clone())
}

/// Tape form of [`similarity_matrix`]; inputs must already be normalized.
pub fn similarity_into(tape: &mut Tape, graph_embs: Var, text_embs: Var, tau: Var) -> Result<Var> {
    if tape.shape(graph_embs) != tape.shape(text_embs) {
        return Err(AlignError::DimMismatch {
            lhs: tape.shape(graph_embs),
            rhs: tape.shape(text_embs),
        });
    }
    check_normalized(tape.value(graph_embs))?;
    check_normalized(tape.value(text_embs))?;
    let dt = tape.transpose(text_embs);
    let sims = tape.matmul(graph_embs, dt)?;
    let scale = tape.exp_scalar(tau)?;
    Ok(tape.mul_scalar_node(sims, scale)?)
}

/// Mean of the row-wise and column-wise cross-entropies of a square logit
/// matrix against diagonal targets.
pub fn contrastive_loss_value(lambda: &Tensor) -> Result<f32> {
    let mut tape = Tape::new();
    let l = tape.constant(lambda.clone());
    let out = contrastive_loss_into(&mut tape, l)?;
    Ok(tape.value(out).item())
}

/// Tape form of [`contrastive_loss_value`].
pub fn contrastive_loss_into(tape: &mut Tape, lambda: Var) -> Result<Var> {
    let shape = tape.shape(lambda);
    if shape[0] != shape[1] {
        return Err(AlignError::NonSquare(shape));
    }
    let targets: Vec<usize> = (0..shape[0]).collect();
    let fwd = tape.softmax_ce_rows(lambda, targets.clone())?;
    let lt = tape.transpose(lambda);
    let bwd = tape.softmax_ce_rows(lt, targets)?;
    let sum = tape.add(fwd, bwd)?;
    Ok(tape.scale(sum, 0.5))
}

// ---------------------------------------------------------------------------
// Training configuration and checkpoint
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Local phase first, then global (the default schedule).
    #[default]
    Sequential,
    /// One stream of steps minimizing local + global jointly.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub encoder: EncoderConfig,
    pub lr: f32,
    pub local_epochs: usize,
    pub global_epochs: usize,
    pub batch_size: usize,
    pub mode: TrainingMode,
    pub seed: u64,
    /// Node cap for per-batch closure subgraphs.
    pub closure_cap: usize,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            lr: 1e-4,
            local_epochs: 20,
            global_epochs: 20,
            batch_size: 32,
            mode: TrainingMode::Sequential,
            seed: 0,
            closure_cap: 512,
        }
    }
}

/// Per-epoch mean losses. A stream that did not run contributes 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub l_local: f64,
    pub l_global: f64,
    pub l_hka: f64,
}

pub fn loss_log_csv(log: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,l_local,l_global,l_hka\n");
    for row in log {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.epoch, row.l_local, row.l_global, row.l_hka
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub local_epochs_run: usize,
    pub global_epochs_run: usize,
    pub final_local_loss: Option<f64>,
    pub final_global_loss: Option<f64>,
    pub loss_log: Vec<EpochLoss>,
    pub entity_count: usize,
    pub relation_count: usize,
}

/// Trained encoders plus the frozen entity embedding table.
pub struct AlignmentCheckpoint {
    pub config: AlignmentConfig,
    pub params: ParamSet,
    pub graph_encoder: GraphEncoder,
    pub text_encoder: TextEncoder,
    /// Row-normalized d-vector per entity, frozen after training.
    pub embeddings: Tensor,
    pub meta: TrainMeta,
}

impl AlignmentCheckpoint {
    pub fn tau(&self) -> f32 {
        let id = self.params.id(TAU_PARAM).expect("tau always registered");
        self.params.value(id).item()
    }

    pub fn embedding_of(&self, entity: crate::kg::EntityId) -> &[f32] {
        self.embeddings.row(entity.index())
    }

    /// Normalized text embedding under the trained text encoder.
    pub fn embed_text(&self, text: &str) -> Result<Tensor> {
        let raw = self.text_encoder.encode(&self.params, text)?;
        Ok(crate::tensor::l2_normalize_rows(&raw)?)
    }

    /// Normalized pooled embedding of a subgraph.
    pub fn embed_subgraph(&self, subgraph: &Subgraph) -> Result<Tensor> {
        let raw = self.graph_encoder.encode_pooled(&self.params, subgraph)?;
        Ok(crate::tensor::l2_normalize_rows(&raw)?)
    }

    /// Write `params.bin`, `vocab.tsv` and `meta.json` into a directory.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut tensors: Vec<(&str, &Tensor)> = self
            .params
            .named_values()
            .collect();
        tensors.push((EMBEDDINGS_TENSOR, &self.embeddings));
        save_tensors(&dir.join("params.bin"), &tensors)?;
        self.text_encoder.vocabulary().save(&dir.join("vocab.tsv"))?;
        #[derive(Serialize)]
        struct MetaFile<'a> {
            config: &'a AlignmentConfig,
            meta: &'a TrainMeta,
        }
        let json = serde_json::to_string_pretty(&MetaFile {
            config: &self.config,
            meta: &self.meta,
        })?;
        std::fs::write(dir.join("meta.json"), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct MetaFile {
            config: AlignmentConfig,
            meta: TrainMeta,
        }
        let meta_json = std::fs::read_to_string(dir.join("meta.json"))?;
        let MetaFile { config, meta } = serde_json::from_str(&meta_json)?;
        let vocab = Vocabulary::load(&dir.join("vocab.tsv"))?;

        let mut params = ParamSet::new();
        let graph_encoder = GraphEncoder::init(
            config.encoder,
            meta.entity_count,
            meta.relation_count,
            &mut params,
        )?;
        let text_encoder = TextEncoder::init(config.encoder, vocab, &mut params)?;
        params.register(TAU_PARAM, Tensor::scalar(0.0));

        let snapshot = load_tensors(&dir.join("params.bin"))?;
        let embeddings = snapshot
            .iter()
            .find(|(n, _)| n == EMBEDDINGS_TENSOR)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| AlignError::Checkpoint("missing entity embedding table".into()))?;
        params.load_values(&snapshot)?;

        Ok(Self {
            config,
            params,
            graph_encoder,
            text_encoder,
            embeddings,
            meta,
        })
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct Trainer<'a> {
    cfg: &'a AlignmentConfig,
    params: ParamSet,
    ge: GraphEncoder,
    te: TextEncoder,
    tau_id: crate::tensor::ParamId,
    index: crate::graph::AdjacencyIndex,
    seeds: SeedTree,
}

impl<'a> Trainer<'a> {
    fn clamp_tau(&mut self) {
        let (lo, hi) = TEMPERATURE_SCALE_RANGE;
        let v = self.params.value(self.tau_id).item();
        let clamped = v.clamp(lo.ln(), hi.ln());
        if clamped != v {
            self.params.value_mut(self.tau_id).data_mut()[0] = clamped;
        }
    }

    /// One optimizer step over a local batch, a global batch, or both.
    /// Returns (l_local, l_global).
    fn step(
        &mut self,
        local: Option<&[NodeDescriptionPair]>,
        global: Option<&[SubgraphDocumentPair]>,
        opt: &mut AdamState,
        total_steps: u64,
        dropout_rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<(Option<f64>, Option<f64>)> {
        let mut tape = Tape::new();
        let tau = tape.param(&self.params, self.tau_id);

        let mut losses: Vec<Var> = Vec::new();
        let mut l_local = None;
        let mut l_global = None;

        if let Some(batch) = local {
            let anchors: Vec<_> = batch.iter().map(|p| p.entity).collect();
            let closure = extract_khop(
                &self.index,
                &anchors,
                self.cfg.encoder.layers,
                self.cfg.closure_cap.max(anchors.len()),
                None,
            )?;
            let node_out = self
                .ge
                .encode_into(&mut tape, &self.params, &closure, Some(dropout_rng))?;
            let rows: Vec<usize> = anchors
                .iter()
                .map(|e| closure.position_of(*e).expect("anchors survive the cap"))
                .collect();
            let anchor_rows = tape.gather_rows(node_out, rows)?;
            let h = tape.l2_normalize_rows(anchor_rows)?;

            let mut texts = Vec::with_capacity(batch.len());
            for pair in batch {
                texts.push(self.te.encode_into(
                    &mut tape,
                    &self.params,
                    &pair.text,
                    Some(dropout_rng),
                )?);
            }
            let stacked = tape.concat_rows(texts)?;
            let d = tape.l2_normalize_rows(stacked)?;

            let lambda = similarity_into(&mut tape, h, d, tau)?;
            let loss = contrastive_loss_into(&mut tape, lambda)?;
            l_local = Some(tape.value(loss).item() as f64);
            losses.push(loss);
        }

        if let Some(batch) = global {
            let mut pooled = Vec::with_capacity(batch.len());
            let mut texts = Vec::with_capacity(batch.len());
            for pair in batch {
                pooled.push(self.ge.encode_pooled_into(
                    &mut tape,
                    &self.params,
                    &pair.subgraph,
                    Some(dropout_rng),
                )?);
                texts.push(self.te.encode_into(
                    &mut tape,
                    &self.params,
                    &pair.document,
                    Some(dropout_rng),
                )?);
            }
            let h_raw = tape.concat_rows(pooled)?;
            let h = tape.l2_normalize_rows(h_raw)?;
            let d_raw = tape.concat_rows(texts)?;
            let d = tape.l2_normalize_rows(d_raw)?;
            let lambda = similarity_into(&mut tape, h, d, tau)?;
            let loss = contrastive_loss_into(&mut tape, lambda)?;
            l_global = Some(tape.value(loss).item() as f64);
            losses.push(loss);
        }

        let total = match losses.len() {
            0 => return Ok((None, None)),
            1 => losses[0],
            _ => tape.add(losses[0], losses[1])?,
        };

        self.params.zero_grads();
        tape.backward(total, &mut self.params)?;
        opt.step(&mut self.params, total_steps)?;
        self.clamp_tau();
        Ok((l_local, l_global))
    }
}

fn batches_of<T: Clone>(items: &[T], size: usize) -> Vec<Vec<T>> {
    // Trailing batches below 2 carry no contrastive signal; drop them.
    items
        .chunks(size)
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect()
}

/// Train both alignment levels with shared parameters and return a frozen
/// checkpoint. `global` may be empty (local-only ablation).
pub fn train_alignment(
    kg: &KnowledgeGraph,
    local: &[NodeDescriptionPair],
    global: &[SubgraphDocumentPair],
    cfg: &AlignmentConfig,
) -> Result<AlignmentCheckpoint> {
    if local.len() < 2 {
        return Err(AlignError::TooFewPairs(local.len()));
    }
    if cfg.batch_size < 2 {
        return Err(AlignError::BatchTooSmall(cfg.batch_size));
    }

    // Vocabulary from everything the text encoder will ever see here.
    let corpus: Vec<&str> = local
        .iter()
        .map(|p| p.text.as_str())
        .chain(global.iter().map(|p| p.document.as_str()))
        .collect();
    let vocab = Vocabulary::build(corpus.into_iter(), 2);

    let mut params = ParamSet::new();
    let ge = GraphEncoder::init(
        cfg.encoder,
        kg.entity_count(),
        kg.relation_count(),
        &mut params,
    )?;
    let te = TextEncoder::init(cfg.encoder, vocab, &mut params)?;
    let tau_id = params.register(TAU_PARAM, Tensor::scalar(0.0));

    let seeds = SeedTree::new(cfg.seed);
    let mut trainer = Trainer {
        cfg,
        params,
        ge,
        te,
        tau_id,
        index: build_index(kg),
        seeds,
    };

    // Alignment uses a flat learning rate (no warmup stage here).
    let mut opt = AdamState::new(&trainer.params, cfg.lr, 0.0);
    let steps_per_local = batches_of(local, cfg.batch_size).len() as u64;
    let steps_per_global = if global.is_empty() {
        0
    } else {
        batches_of(global, cfg.batch_size).len() as u64
    };
    let total_steps = match cfg.mode {
        TrainingMode::Sequential => {
            cfg.local_epochs as u64 * steps_per_local
                + cfg.global_epochs as u64 * steps_per_global
        }
        TrainingMode::Joint => {
            cfg.local_epochs as u64 * steps_per_local.max(steps_per_global)
        }
    }
    .max(1);

    let mut loss_log: Vec<EpochLoss> = Vec::new();
    let mut epoch_counter = 0usize;

    let run_epoch = |trainer: &mut Trainer,
                         opt: &mut AdamState,
                         phase: &'static str,
                         epoch_counter: &mut usize,
                         loss_log: &mut Vec<EpochLoss>,
                         use_local: bool,
                         use_global: bool|
     -> Result<()> {
        let epoch = *epoch_counter;
        let mut local_items = local.to_vec();
        let mut global_items = global.to_vec();
        let mut shuffle_rng = trainer.seeds.rng_indexed("epoch-shuffle", epoch as u64);
        local_items.shuffle(&mut shuffle_rng);
        global_items.shuffle(&mut shuffle_rng);
        let local_batches = if use_local {
            batches_of(&local_items, trainer.cfg.batch_size)
        } else {
            Vec::new()
        };
        let global_batches = if use_global && !global_items.is_empty() {
            batches_of(&global_items, trainer.cfg.batch_size)
        } else {
            Vec::new()
        };
        let n_steps = local_batches.len().max(global_batches.len());
        let mut dropout_rng = trainer.seeds.rng_indexed("dropout", epoch as u64);

        let (mut sum_local, mut n_local) = (0.0f64, 0usize);
        let (mut sum_global, mut n_global) = (0.0f64, 0usize);
        for s in 0..n_steps {
            let lb = if local_batches.is_empty() {
                None
            } else {
                Some(local_batches[s % local_batches.len()].as_slice())
            };
            let gb = if global_batches.is_empty() {
                None
            } else {
                Some(global_batches[s % global_batches.len()].as_slice())
            };
            let (ll, lg) = trainer.step(lb, gb, opt, total_steps, &mut dropout_rng)?;
            if let Some(v) = ll {
                if !v.is_finite() {
                    return Err(AlignError::Diverged { phase, epoch });
                }
                sum_local += v;
                n_local += 1;
            }
            if let Some(v) = lg {
                if !v.is_finite() {
                    return Err(AlignError::Diverged { phase, epoch });
                }
                sum_global += v;
                n_global += 1;
            }
        }
        let l_local = if n_local > 0 {
            sum_local / n_local as f64
        } else {
            0.0
        };
        let l_global = if n_global > 0 {
            sum_global / n_global as f64
        } else {
            0.0
        };
        loss_log.push(EpochLoss {
            epoch,
            l_local,
            l_global,
            l_hka: l_local + l_global,
        });
        *epoch_counter += 1;
        Ok(())
    };

    match cfg.mode {
        TrainingMode::Sequential => {
            for _ in 0..cfg.local_epochs {
                run_epoch(
                    &mut trainer,
                    &mut opt,
                    "local",
                    &mut epoch_counter,
                    &mut loss_log,
                    true,
                    false,
                )?;
            }
            if !global.is_empty() {
                for _ in 0..cfg.global_epochs {
                    run_epoch(
                        &mut trainer,
                        &mut opt,
                        "global",
                        &mut epoch_counter,
                        &mut loss_log,
                        false,
                        true,
                    )?;
                }
            }
        }
        TrainingMode::Joint => {
            for _ in 0..cfg.local_epochs {
                run_epoch(
                    &mut trainer,
                    &mut opt,
                    "joint",
                    &mut epoch_counter,
                    &mut loss_log,
                    true,
                    true,
                )?;
            }
        }
    }

    let Trainer { params, ge, te, .. } = trainer;
    let embeddings = embed_all(kg, &ge, &params)?;
    let final_local = loss_log
        .iter()
        .rev()
        .find(|r| r.l_local > 0.0)
        .map(|r| r.l_local);
    let final_global = loss_log
        .iter()
        .rev()
        .find(|r| r.l_global > 0.0)
        .map(|r| r.l_global);
    let global_run = match (global.is_empty(), cfg.mode) {
        (true, _) => 0,
        (false, TrainingMode::Sequential) => cfg.global_epochs,
        (false, TrainingMode::Joint) => cfg.local_epochs,
    };
    Ok(AlignmentCheckpoint {
        config: *cfg,
        meta: TrainMeta {
            seed: cfg.seed,
            local_epochs_run: cfg.local_epochs,
            global_epochs_run: global_run,
            final_local_loss: final_local,
            final_global_loss: final_global,
            loss_log,
            entity_count: kg.entity_count(),
            relation_count: kg.relation_count(),
        },
        params,
        graph_encoder: ge,
        text_encoder: te,
        embeddings,
    })
}

/// Encode the full training graph once; rows indexed by entity id and
/// L2-normalized.
pub fn embed_all(kg: &KnowledgeGraph, ge: &GraphEncoder, params: &ParamSet) -> Result<Tensor> {
    let index = build_index(kg);
    let anchors: Vec<_> = kg.entities().collect();
    let full = extract_khop(&index, &anchors, 0, usize::MAX, None)?;
    let out = ge.encode(params, &full)?;
    Ok(crate::tensor::l2_normalize_rows(&out)?)
}

/// Rank of each diagonal gold entry when scoring row i of `graph_embs`
/// against every row of `text_embs` (0 = best). Ties resolve to the lower
/// column index.
pub fn diagonal_ranks(graph_embs: &Tensor, text_embs: &Tensor) -> Vec<usize> {
    let n = graph_embs.rows();
    (0..n)
        .map(|i| {
            let gold: f32 = graph_embs
                .row(i)
                .iter()
                .zip(text_embs.row(i))
                .map(|(a, b)| a * b)
                .sum();
            (0..n)
                .filter(|&j| {
                    let s: f32 = graph_embs
                        .row(i)
                        .iter()
                        .zip(text_embs.row(j))
                        .map(|(a, b)| a * b)
                        .sum();
                    s > gold || (s == gold && j < i)
                })
                .count()
        })
        .collect()
}

/// Fraction of rows whose best match is their own pair.
pub fn retrieval_at_1(graph_embs: &Tensor, text_embs: &Tensor) -> f64 {
    let ranks = diagonal_ranks(graph_embs, text_embs);
    ranks.iter().filter(|&&r| r == 0).count() as f64 / ranks.len().max(1) as f64
}

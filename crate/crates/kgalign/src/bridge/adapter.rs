//! Two-layer knowledge adapter and its tuning loop.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::rng::{fnv1a, SeedTree};
use crate::tensor::{
    load_tensors, save_tensors, AdamState, ParamId, ParamSet, Tape, Tensor, Var,
};

use super::{Backend, BackendError, RenderedPrompt, Result};

/// Affine -> softplus -> affine map from the alignment embedding space into
/// a backend's soft-token space. The only component updated during tuning.
pub struct KnowledgeAdapter {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    params: ParamSet,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl KnowledgeAdapter {
    /// Hidden width is 4x the input dimension.
    pub fn init(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let hidden_dim = 4 * input_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(
            &[&seed.to_le_bytes()[..], b"adapter-init"].concat(),
        ));
        let mut params = ParamSet::new();
        // Small init keeps initial slot vectors near the bias.
        let w1 = params.register(
            "adapter.w1",
            Tensor::randn(input_dim, hidden_dim, 0.05, &mut rng),
        );
        let b1 = params.register("adapter.b1", Tensor::zeros(1, hidden_dim));
        let w2 = params.register(
            "adapter.w2",
            Tensor::randn(hidden_dim, output_dim, 0.05, &mut rng),
        );
        let b2 = params.register("adapter.b2", Tensor::zeros(1, output_dim));
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            params,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Record the forward map for a K x input_dim embedding matrix,
    /// producing K x output_dim slot vectors.
    pub fn forward_into(&self, tape: &mut Tape, node_embeddings: &Tensor) -> Result<Var> {
        if node_embeddings.cols() != self.input_dim {
            return Err(BackendError::AdapterDimMismatch {
                got: node_embeddings.cols(),
                want: self.input_dim,
            });
        }
        let x = tape.constant(node_embeddings.clone());
        let w1 = tape.param(&self.params, self.w1);
        let h = tape.matmul(x, w1)?;
        let b1 = tape.param(&self.params, self.b1);
        let hb = tape.add_row_broadcast(h, b1)?;
        let act = tape.softplus(hb);
        let w2 = tape.param(&self.params, self.w2);
        let o = tape.matmul(act, w2)?;
        let b2 = tape.param(&self.params, self.b2);
        Ok(tape.add_row_broadcast(o, b2)?)
    }

    /// One soft-token vector per node embedding, order preserved.
    pub fn adapt(&self, node_embeddings: &Tensor) -> Result<Vec<Vec<f32>>> {
        let mut tape = Tape::new();
        let out = self.forward_into(&mut tape, node_embeddings)?;
        let t = tape.value(out);
        Ok((0..t.rows()).map(|r| t.row(r).to_vec()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors: Vec<(&str, &Tensor)> = self.params.named_values().collect();
        save_tensors(path, &tensors)?;
        Ok(())
    }

    pub fn load(path: &Path, input_dim: usize, output_dim: usize) -> Result<Self> {
        let mut adapter = Self::init(input_dim, output_dim, 0);
        let snapshot = load_tensors(path)?;
        adapter.params.load_values(&snapshot)?;
        Ok(adapter)
    }
}

/// One tuning example: the prompt text, the (already adapted-from) node
/// embeddings behind its slots, and the gold response.
#[derive(Debug, Clone)]
pub struct TuningPrompt {
    pub prompt: RenderedPrompt,
    /// K x input_dim matrix of slot-source embeddings; may be empty.
    pub slot_embeddings: Vec<Vec<f32>>,
    pub target: String,
}

#[derive(Debug, Clone, Copy)]
pub struct TuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub warmup_ratio: f32,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 2,
            lr: 2e-3,
            warmup_ratio: 3e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneReport {
    /// Mean NLL over the full prompt set before any update.
    pub initial_loss: f64,
    /// Mean NLL after the final epoch, evaluated without gradients.
    pub final_loss: f64,
    /// Mean training NLL per epoch.
    pub epoch_losses: Vec<f64>,
}

fn embeddings_tensor(prompt: &TuningPrompt, input_dim: usize) -> Option<Tensor> {
    if prompt.slot_embeddings.is_empty() {
        return None;
    }
    let rows: Vec<Vec<f32>> = prompt.slot_embeddings.clone();
    debug_assert!(rows.iter().all(|r| r.len() == input_dim));
    let _ = input_dim;
    Some(Tensor::from_rows(&rows))
}

/// Mean NLL over prompts under the current adapter, no updates.
pub fn evaluate_adapter(
    prompts: &[TuningPrompt],
    adapter: &KnowledgeAdapter,
    backend: &dyn Backend,
) -> Result<f64> {
    let mut total = 0.0;
    for p in prompts {
        let slots = match embeddings_tensor(p, adapter.input_dim()) {
            Some(t) => adapter.adapt(&t)?,
            None => Vec::new(),
        };
        total += backend.score(&p.prompt, &slots, &p.target)?.nll;
    }
    Ok(total / prompts.len().max(1) as f64)
}

/// Minimize mean NLL of the gold responses by updating only the adapter.
/// The backend and whatever produced the slot embeddings are never touched.
pub fn tune_adapter(
    prompts: &[TuningPrompt],
    adapter: &mut KnowledgeAdapter,
    backend: &dyn Backend,
    cfg: &TuneConfig,
) -> Result<TuneReport> {
    if !backend.supports_score() {
        return Err(BackendError::ScoreUnsupported(backend.name().to_string()));
    }
    let initial_loss = evaluate_adapter(prompts, adapter, backend)?;
    let seeds = SeedTree::new(cfg.seed);
    let steps_per_epoch = prompts.len().div_ceil(cfg.batch_size.max(1)) as u64;
    let total_steps = (cfg.epochs as u64 * steps_per_epoch).max(1);
    let mut opt = AdamState::new(adapter.params(), cfg.lr, cfg.warmup_ratio);

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..prompts.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = seeds.rng_indexed("tune-shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            adapter.params_mut().zero_grads();
            let mut tapes: Vec<(Tape, Var, Tensor)> = Vec::new();
            let inv = 1.0 / batch.len() as f32;
            for &i in batch {
                let p = &prompts[i];
                let Some(embs) = embeddings_tensor(p, adapter.input_dim()) else {
                    // Slot-free prompts still contribute loss, but there is
                    // nothing for the adapter to learn from them.
                    epoch_total += backend.score(&p.prompt, &[], &p.target)?.nll;
                    continue;
                };
                let mut tape = Tape::new();
                let out = adapter.forward_into(&mut tape, &embs)?;
                let value = tape.value(out);
                let slots: Vec<Vec<f32>> =
                    (0..value.rows()).map(|r| value.row(r).to_vec()).collect();
                let outcome = backend.score(&p.prompt, &slots, &p.target)?;
                epoch_total += outcome.nll;
                let mut seed_grad = Tensor::zeros(value.rows(), value.cols());
                for (r, g) in outcome.slot_grads.iter().enumerate() {
                    for (c, v) in g.iter().enumerate() {
                        seed_grad.set(r, c, v * inv);
                    }
                }
                tapes.push((tape, out, seed_grad));
            }
            for (tape, out, seed_grad) in &tapes {
                tape.backward_with_seeds(&[(*out, seed_grad.clone())], adapter.params_mut())?;
            }
            opt.step(adapter.params_mut(), total_steps)?;
        }
        epoch_losses.push(epoch_total / prompts.len().max(1) as f64);
    }

    let final_loss = evaluate_adapter(prompts, adapter, backend)?;
    Ok(TuneReport {
        initial_loss,
        final_loss,
        epoch_losses,
    })
}

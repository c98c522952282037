//! Deterministic stand-in for a language model.
//!
//! Scoring: a prompt feature is the hashed bag-of-words of the prompt text
//! plus the mean of the slot vectors pushed through a fixed random
//! projection. The NLL of a target is softplus of the negative affinity
//! between that feature and the target's bag-of-words, which keeps the loss
//! positive and yields closed-form slot gradients.
//!
//! Generation ranks a configurable candidate-answer vocabulary by the same
//! affinity. An optional oracle table pins exact answers per prompt so
//! end-to-end evaluation paths can be verified against known gold.

use std::collections::HashMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoders::tokenize;
use crate::instruction::templates::{EXTRACTION_EXAMPLE_OUTPUT, EXTRACTION_INSTRUCTION};
use crate::rng::fnv1a;
use crate::tensor::Tensor;

use super::{check_slot_dims, Backend, Generation, RenderedPrompt, Result, ScoreOutcome};

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub seed: u64,
    /// Soft-token dimension the adapter projects into.
    pub soft_dim: usize,
    /// Hashed bag-of-words feature dimension.
    pub feature_dim: usize,
    /// Affinity gain; larger values sharpen scores and gradients.
    pub gain: f32,
    /// Candidate answers ranked at generation time.
    pub answers: Vec<String>,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            soft_dim: 96,
            feature_dim: 256,
            gain: 4.0,
            answers: vec!["True".to_string(), "False".to_string()],
        }
    }
}

pub struct MockBackend {
    cfg: MockConfig,
    /// feature_dim x soft_dim projection, fixed at construction.
    projection: Tensor,
    oracle: HashMap<u64, String>,
}

impl MockBackend {
    pub fn new(cfg: MockConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(
            &[&cfg.seed.to_le_bytes()[..], b"mock-projection"].concat(),
        ));
        let projection = Tensor::randn(
            cfg.feature_dim,
            cfg.soft_dim,
            1.0 / (cfg.soft_dim as f32).sqrt(),
            &mut rng,
        );
        Self {
            cfg,
            projection,
            oracle: HashMap::new(),
        }
    }

    pub fn config(&self) -> &MockConfig {
        &self.cfg
    }

    /// Pin gold generations for specific prompts, keyed by combined prompt
    /// text. Generation falls back to affinity ranking for unknown prompts.
    pub fn with_oracle(mut self, entries: impl IntoIterator<Item = (String, String)>) -> Self {
        for (prompt, answer) in entries {
            self.oracle.insert(fnv1a(prompt.as_bytes()), answer);
        }
        self
    }

    pub fn with_answers(mut self, answers: Vec<String>) -> Self {
        self.cfg.answers = answers;
        self
    }

    /// Hashed, L2-normalized bag-of-words feature.
    fn bow(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.cfg.feature_dim];
        for tok in tokenize(text) {
            let h = fnv1a(tok.as_bytes());
            let bucket = (h % self.cfg.feature_dim as u64) as usize;
            // A second hash bit gives each token a sign, spreading mass.
            let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    /// Prompt feature: bag-of-words plus mean projected slot vector.
    fn prompt_feature(&self, prompt: &RenderedPrompt, slots: &[Vec<f32>]) -> Vec<f32> {
        let mut u = self.bow(&prompt.combined());
        if !slots.is_empty() {
            let inv = 1.0 / slots.len() as f32;
            for s in slots {
                for (f, row) in u.iter_mut().zip(0..self.cfg.feature_dim) {
                    let proj: f32 = self
                        .projection
                        .row(row)
                        .iter()
                        .zip(s)
                        .map(|(p, x)| p * x)
                        .sum();
                    *f += inv * proj;
                }
            }
        }
        u
    }

    fn affinity(&self, u: &[f32], answer: &str) -> f32 {
        let b = self.bow(answer);
        self.cfg.gain * u.iter().zip(&b).map(|(a, x)| a * x).sum::<f32>()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn soft_dim(&self) -> usize {
        self.cfg.soft_dim
    }

    fn supports_score(&self) -> bool {
        true
    }

    fn score(
        &self,
        prompt: &RenderedPrompt,
        slots: &[Vec<f32>],
        target: &str,
    ) -> Result<ScoreOutcome> {
        check_slot_dims(slots, self.cfg.soft_dim)?;
        let u = self.prompt_feature(prompt, slots);
        let b = self.bow(target);
        let a = self.cfg.gain as f64
            * u.iter()
                .zip(&b)
                .map(|(x, y)| (*x as f64) * (*y as f64))
                .sum::<f64>();
        let nll = softplus(-a);
        // d nll / d a = -sigmoid(-a); d a / d slot_k = (gain / K) P^T b.
        let mut slot_grads = Vec::with_capacity(slots.len());
        if !slots.is_empty() {
            let coef = (-sigmoid(-a) * self.cfg.gain as f64 / slots.len() as f64) as f32;
            let mut ptb = vec![0.0f32; self.cfg.soft_dim];
            for (row, bv) in b.iter().enumerate() {
                if *bv == 0.0 {
                    continue;
                }
                for (g, p) in ptb.iter_mut().zip(self.projection.row(row)) {
                    *g += bv * p;
                }
            }
            let grad: Vec<f32> = ptb.into_iter().map(|v| v * coef).collect();
            for _ in 0..slots.len() {
                slot_grads.push(grad.clone());
            }
        }
        Ok(ScoreOutcome { nll, slot_grads })
    }

    fn generate(
        &self,
        prompt: &RenderedPrompt,
        slots: &[Vec<f32>],
        n: usize,
    ) -> Result<Vec<Generation>> {
        check_slot_dims(slots, self.cfg.soft_dim)?;
        let combined = prompt.combined();
        // Extraction prompts get the canned example output so offline runs
        // can exercise the parse path end to end.
        if combined.contains(EXTRACTION_INSTRUCTION) {
            return Ok(vec![Generation {
                text: EXTRACTION_EXAMPLE_OUTPUT.to_string(),
                score: 1.0,
            }]
            .into_iter()
            .take(n)
            .collect());
        }
        let mut out: Vec<Generation> = Vec::new();
        if let Some(answer) = self.oracle.get(&fnv1a(combined.as_bytes())) {
            out.push(Generation {
                text: answer.clone(),
                score: f64::INFINITY,
            });
        }
        let u = self.prompt_feature(prompt, slots);
        let mut scored: Vec<(usize, f64)> = self
            .cfg
            .answers
            .iter()
            .enumerate()
            .map(|(i, ans)| (i, self.affinity(&u, ans) as f64))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (i, score) in scored {
            let text = &self.cfg.answers[i];
            if out.iter().any(|g| &g.text == text) {
                continue;
            }
            out.push(Generation {
                text: text.clone(),
                score,
            });
        }
        out.truncate(n);
        Ok(out)
    }

    fn state_fingerprint(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&self.cfg.seed.to_le_bytes());
        bytes.extend_from_slice(&(self.cfg.soft_dim as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.cfg.feature_dim as u64).to_le_bytes());
        bytes.extend_from_slice(&self.cfg.gain.to_le_bytes());
        for a in &self.cfg.answers {
            bytes.extend_from_slice(a.as_bytes());
            bytes.push(0);
        }
        for v in self.projection.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut keys: Vec<_> = self.oracle.iter().collect();
        keys.sort();
        for (k, v) in keys {
            bytes.extend_from_slice(&k.to_le_bytes());
            bytes.extend_from_slice(v.as_bytes());
        }
        bytes
    }
}

//! Transformer text encoder with mean pooling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::rng::fnv1a;
use crate::tensor::{ParamId, ParamSet, Tape, Tensor, Var};

use super::{EncoderConfig, Result, Vocabulary};

struct LayerIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    ffn_w1: ParamId,
    ffn_b1: ParamId,
    ffn_w2: ParamId,
    ffn_b2: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
}

/// Token embeddings + learned positions through `layers` blocks of
/// full self-attention and a softplus feed-forward, mean-pooled.
pub struct TextEncoder {
    cfg: EncoderConfig,
    vocab: Vocabulary,
    tokens: ParamId,
    positions: ParamId,
    layers: Vec<LayerIds>,
}

impl TextEncoder {
    /// Register all parameters into `params` under the `te.` prefix.
    pub fn init(cfg: EncoderConfig, vocab: Vocabulary, params: &mut ParamSet) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let std = 1.0 / (d as f32).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(
            &[&cfg.feature_seed.to_le_bytes()[..], b"te-init"].concat(),
        ));
        let tokens = params.register(
            "te.token_embeddings",
            Tensor::randn(vocab.len(), d, std, &mut rng),
        );
        let positions = params.register(
            "te.positions",
            Tensor::randn(cfg.max_text_len, d, std, &mut rng),
        );
        let hidden = 4 * d;
        let layers = (0..cfg.layers)
            .map(|l| LayerIds {
                wq: params.register(&format!("te.layer{l}.wq"), Tensor::randn(d, d, std, &mut rng)),
                wk: params.register(&format!("te.layer{l}.wk"), Tensor::randn(d, d, std, &mut rng)),
                wv: params.register(&format!("te.layer{l}.wv"), Tensor::randn(d, d, std, &mut rng)),
                wo: params.register(&format!("te.layer{l}.wo"), Tensor::randn(d, d, std, &mut rng)),
                ln1_gain: params.register(
                    &format!("te.layer{l}.ln1_gain"),
                    Tensor::new(1, d, vec![1.0; d]),
                ),
                ln1_bias: params.register(&format!("te.layer{l}.ln1_bias"), Tensor::zeros(1, d)),
                ffn_w1: params.register(
                    &format!("te.layer{l}.ffn_w1"),
                    Tensor::randn(d, hidden, std, &mut rng),
                ),
                ffn_b1: params.register(&format!("te.layer{l}.ffn_b1"), Tensor::zeros(1, hidden)),
                ffn_w2: params.register(
                    &format!("te.layer{l}.ffn_w2"),
                    Tensor::randn(hidden, d, 1.0 / (hidden as f32).sqrt(), &mut rng),
                ),
                ffn_b2: params.register(&format!("te.layer{l}.ffn_b2"), Tensor::zeros(1, d)),
                ln2_gain: params.register(
                    &format!("te.layer{l}.ln2_gain"),
                    Tensor::new(1, d, vec![1.0; d]),
                ),
                ln2_bias: params.register(&format!("te.layer{l}.ln2_bias"), Tensor::zeros(1, d)),
            })
            .collect();
        Ok(Self {
            cfg,
            vocab,
            tokens,
            positions,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Record the forward pass for one text, returning its pooled 1 x d
    /// embedding. Degenerate inputs fall back to a single OOV token.
    pub fn encode_into(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        text: &str,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let ids = self.vocab.encode(text, self.cfg.max_text_len);
        let len = ids.len();
        let dh = self.cfg.head_dim();
        let inv_sqrt = 1.0 / (dh as f32).sqrt();

        let token_table = tape.param(params, self.tokens);
        let emb = tape.gather_rows(token_table, ids.iter().map(|&i| i as usize).collect())?;
        let pos_table = tape.param(params, self.positions);
        let pos = tape.gather_rows(pos_table, (0..len).collect())?;
        let mut x = tape.add(emb, pos)?;

        for layer in &self.layers {
            let q = {
                let w = tape.param(params, layer.wq);
                tape.matmul(x, w)?
            };
            let k = {
                let w = tape.param(params, layer.wk);
                tape.matmul(x, w)?
            };
            let v = {
                let w = tape.param(params, layer.wv);
                tape.matmul(x, w)?
            };
            let mut heads = Vec::with_capacity(self.cfg.heads);
            for h in 0..self.cfg.heads {
                let qh = tape.slice_cols(q, h * dh, dh)?;
                let kh = tape.slice_cols(k, h * dh, dh)?;
                let vh = tape.slice_cols(v, h * dh, dh)?;
                let kt = tape.transpose(kh);
                let logits_raw = tape.matmul(qh, kt)?;
                let logits = tape.scale(logits_raw, inv_sqrt);
                let attn = tape.softmax_rows(logits);
                heads.push(tape.matmul(attn, vh)?);
            }
            let merged = tape.concat_cols(heads)?;
            let wo = tape.param(params, layer.wo);
            let mut out = tape.matmul(merged, wo)?;
            if let Some(rng) = dropout_rng.as_deref_mut() {
                out = tape.dropout(out, self.cfg.dropout, rng);
            }
            let res = tape.add(x, out)?;
            let g1 = tape.param(params, layer.ln1_gain);
            let b1 = tape.param(params, layer.ln1_bias);
            x = tape.layer_norm_rows(res, g1, b1)?;

            let w1 = tape.param(params, layer.ffn_w1);
            let h1 = tape.matmul(x, w1)?;
            let fb1 = tape.param(params, layer.ffn_b1);
            let h1b = tape.add_row_broadcast(h1, fb1)?;
            let act = tape.softplus(h1b);
            let w2 = tape.param(params, layer.ffn_w2);
            let h2 = tape.matmul(act, w2)?;
            let fb2 = tape.param(params, layer.ffn_b2);
            let mut ffn = tape.add_row_broadcast(h2, fb2)?;
            if let Some(rng) = dropout_rng.as_deref_mut() {
                ffn = tape.dropout(ffn, self.cfg.dropout, rng);
            }
            let res2 = tape.add(x, ffn)?;
            let g2 = tape.param(params, layer.ln2_gain);
            let b2 = tape.param(params, layer.ln2_bias);
            x = tape.layer_norm_rows(res2, g2, b2)?;
        }
        Ok(tape.mean_pool_rows(x)?)
    }

    /// Inference convenience: fresh tape, no dropout.
    pub fn encode(&self, params: &ParamSet, text: &str) -> Result<Tensor> {
        let mut tape = Tape::new();
        let out = self.encode_into(&mut tape, params, text, None)?;
        Ok(tape.value(out).clone())
    }
}

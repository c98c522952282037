//! Neighbor-masked multi-head attention over subgraphs.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::Subgraph;
use crate::rng::fnv1a;
use crate::tensor::{ParamId, ParamSet, Tape, Tensor, Var};

use super::{EncodeError, EncoderConfig, Result};

struct LayerIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    ln_gain: ParamId,
    ln_bias: ParamId,
}

/// Graph encoder over a fixed entity/relation table.
///
/// Node features and relation embeddings are trainable; subgraphs carrying
/// local string vocabularies get deterministic seeded features instead, so
/// extraction-built graphs encode without touching the tables.
pub struct GraphEncoder {
    cfg: EncoderConfig,
    entity_count: usize,
    relation_count: usize,
    node_features: ParamId,
    relations: ParamId,
    layers: Vec<LayerIds>,
}

impl GraphEncoder {
    /// Register all parameters into `params` under the `ge.` prefix.
    pub fn init(
        cfg: EncoderConfig,
        entity_count: usize,
        relation_count: usize,
        params: &mut ParamSet,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let std = 1.0 / (d as f32).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(
            &[&cfg.feature_seed.to_le_bytes()[..], b"ge-init"].concat(),
        ));
        let node_features = params.register(
            "ge.node_features",
            Tensor::randn(entity_count, d, std, &mut rng),
        );
        let relations = params.register(
            "ge.relations",
            Tensor::randn(relation_count.max(1), d, std, &mut rng),
        );
        let layers = (0..cfg.layers)
            .map(|l| LayerIds {
                wq: params.register(&format!("ge.layer{l}.wq"), Tensor::randn(d, d, std, &mut rng)),
                wk: params.register(&format!("ge.layer{l}.wk"), Tensor::randn(d, d, std, &mut rng)),
                wv: params.register(&format!("ge.layer{l}.wv"), Tensor::randn(d, d, std, &mut rng)),
                wo: params.register(&format!("ge.layer{l}.wo"), Tensor::randn(d, d, std, &mut rng)),
                ln_gain: params.register(
                    &format!("ge.layer{l}.ln_gain"),
                    Tensor::new(1, d, vec![1.0; d]),
                ),
                ln_bias: params.register(&format!("ge.layer{l}.ln_bias"), Tensor::zeros(1, d)),
            })
            .collect();
        Ok(Self {
            cfg,
            entity_count,
            relation_count,
            node_features,
            relations,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    /// Deterministic feature row for an out-of-table surface string.
    fn hashed_row(&self, kind: &str, surface: &str) -> Vec<f32> {
        let seed = fnv1a(
            &[
                &self.cfg.feature_seed.to_le_bytes()[..],
                kind.as_bytes(),
                surface.as_bytes(),
            ]
            .concat(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::randn(1, self.cfg.dim, 1.0 / (self.cfg.dim as f32).sqrt(), &mut rng)
            .data()
            .to_vec()
    }

    /// Record the forward pass, returning one d-vector per subgraph node in
    /// node order. `dropout_rng` enables training dropout; `None` is
    /// deterministic inference.
    pub fn encode_into(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        subgraph: &Subgraph,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        if subgraph.nodes.is_empty() {
            return Err(EncodeError::EmptySubgraph);
        }
        let n = subgraph.nodes.len();
        let d = self.cfg.dim;
        let dh = self.cfg.head_dim();

        // Input features and per-edge relation rows, either table-backed
        // (trainable) or hashed from local surfaces (constant).
        let (features, rel_stack, rel_rows) = match &subgraph.local {
            None => {
                for node in &subgraph.nodes {
                    if node.index() >= self.entity_count {
                        return Err(EncodeError::NodeOutsideTable(node.0));
                    }
                }
                for e in &subgraph.edges {
                    if e.relation.index() >= self.relation_count {
                        return Err(EncodeError::RelationOutsideTable(e.relation.0));
                    }
                }
                let table = tape.param(params, self.node_features);
                let idx: Vec<usize> = subgraph.nodes.iter().map(|e| e.index()).collect();
                let features = tape.gather_rows(table, idx)?;
                let rel_table = tape.param(params, self.relations);
                let zero = tape.constant(Tensor::zeros(1, d));
                // Row `relation_count` is the zero row used by self loops.
                let rel_stack = tape.concat_rows(vec![rel_table, zero])?;
                (features, rel_stack, self.relation_count)
            }
            Some(local) => {
                let rows: Vec<Vec<f32>> = local
                    .entity_surfaces
                    .iter()
                    .map(|s| self.hashed_row("entity", s))
                    .collect();
                let features = tape.constant(Tensor::from_rows(&rows));
                let mut rel_rows: Vec<Vec<f32>> = local
                    .relation_surfaces
                    .iter()
                    .map(|s| self.hashed_row("relation", s))
                    .collect();
                rel_rows.push(vec![0.0; d]);
                let rel_stack = tape.constant(Tensor::from_rows(&rel_rows));
                (features, rel_stack, local.relation_surfaces.len())
            }
        };
        let self_rel = rel_rows;

        // Attention edge list in subgraph positions: every node attends to
        // itself (zero relation row) and to each neighbor through the
        // connecting edge's relation.
        let pos_of = |e: crate::kg::EntityId| -> usize {
            subgraph
                .position_of(e)
                .expect("subgraph edge endpoint outside node list")
        };
        let mut att: Vec<(usize, usize, usize)> = (0..n).map(|i| (i, i, self_rel)).collect();
        for e in &subgraph.edges {
            let (hp, tp, r) = (pos_of(e.head), pos_of(e.tail), e.relation.index());
            att.push((hp, tp, r));
            if hp != tp {
                att.push((tp, hp, r));
            }
        }
        att.sort_unstable();
        let src: Vec<usize> = att.iter().map(|&(s, _, _)| s).collect();
        let dst: Vec<usize> = att.iter().map(|&(_, t, _)| t).collect();
        let rel: Vec<usize> = att.iter().map(|&(_, _, r)| r).collect();

        let rel_edges = tape.gather_rows(rel_stack, rel)?;
        let inv_sqrt = 1.0 / (dh as f32).sqrt();

        let mut x = features;
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
                let rel_h = tape.slice_cols(rel_edges, h * dh, dh)?;

                let q_e = tape.gather_rows(qh, src.clone())?;
                let k_n = tape.gather_rows(kh, dst.clone())?;
                let k_e = tape.add(k_n, rel_h)?;
                let logits_raw = tape.rowwise_dot(q_e, k_e)?;
                let logits = tape.scale(logits_raw, inv_sqrt);
                let alpha = tape.segment_softmax(logits, src.clone())?;

                let v_n = tape.gather_rows(vh, dst.clone())?;
                let v_e = tape.add(v_n, rel_h)?;
                let msg = tape.mul_col_broadcast(alpha, v_e)?;
                heads.push(tape.segment_sum_rows(msg, src.clone(), n)?);
            }
            let merged = tape.concat_cols(heads)?;
            let wo = tape.param(params, layer.wo);
            let mut out = tape.matmul(merged, wo)?;
            if let Some(rng) = dropout_rng.as_deref_mut() {
                out = tape.dropout(out, self.cfg.dropout, rng);
            }
            let res = tape.add(x, out)?;
            let gain = tape.param(params, layer.ln_gain);
            let bias = tape.param(params, layer.ln_bias);
            x = tape.layer_norm_rows(res, gain, bias)?;
        }
        Ok(x)
    }

    /// Mean-pooled subgraph embedding, 1 x d.
    pub fn encode_pooled_into(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        subgraph: &Subgraph,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let nodes = self.encode_into(tape, params, subgraph, dropout_rng)?;
        Ok(tape.mean_pool_rows(nodes)?)
    }

    /// Inference convenience: fresh tape, no dropout.
    pub fn encode(&self, params: &ParamSet, subgraph: &Subgraph) -> Result<Tensor> {
        let mut tape = Tape::new();
        let out = self.encode_into(&mut tape, params, subgraph, None)?;
        Ok(tape.value(out).clone())
    }

    pub fn encode_pooled(&self, params: &ParamSet, subgraph: &Subgraph) -> Result<Tensor> {
        let mut tape = Tape::new();
        let out = self.encode_pooled_into(&mut tape, params, subgraph, None)?;
        Ok(tape.value(out).clone())
    }
}

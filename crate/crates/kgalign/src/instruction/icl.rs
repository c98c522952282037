//! Structural in-context example retrieval: candidates are ranked by cosine
//! similarity between subgraph embeddings, not text overlap.

use serde::{Deserialize, Serialize};

use crate::graph::Subgraph;

use super::{PromptError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IclCandidate {
    pub question: String,
    pub subgraph: Subgraph,
    /// L2-normalized subgraph embedding.
    pub embedding: Vec<f32>,
    pub answer: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IclPool {
    pub dim: usize,
    pub candidates: Vec<IclCandidate>,
}

impl IclPool {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            candidates: Vec::new(),
        }
    }

    pub fn push(&mut self, candidate: IclCandidate) -> Result<()> {
        Self::validate_embedding(&candidate.embedding, self.dim, self.candidates.len())?;
        self.candidates.push(candidate);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    fn validate_embedding(embedding: &[f32], dim: usize, index: usize) -> Result<()> {
        if embedding.len() != dim {
            return Err(PromptError::PoolDimMismatch {
                got: embedding.len(),
                want: dim,
            });
        }
        let norm: f32 = embedding.iter().map(|v| v * v).sum::<f32>().sqrt();
        if (norm - 1.0).abs() > 1e-4 {
            return Err(PromptError::PoolNotNormalized { index });
        }
        Ok(())
    }

    /// Re-validate every entry, for pools loaded from disk.
    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.candidates.iter().enumerate() {
            Self::validate_embedding(&c.embedding, self.dim, i)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IclSelection {
    /// Candidate indices, best first.
    pub indices: Vec<usize>,
    /// True when k exceeded the pool and the whole pool was returned.
    pub truncated_to_pool: bool,
}

/// Top-k candidates by cosine similarity to the query embedding, descending,
/// ties broken by the lower candidate index. k = 0 selects nothing; k beyond
/// the pool returns the whole pool, flagged.
pub fn retrieve_icl(pool: &IclPool, query_embedding: &[f32], k: usize) -> Result<IclSelection> {
    IclPool::validate_embedding(query_embedding, pool.dim, usize::MAX)?;
    if k == 0 {
        return Ok(IclSelection {
            indices: Vec::new(),
            truncated_to_pool: false,
        });
    }
    let mut scored: Vec<(usize, f32)> = pool
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let sim: f32 = c
                .embedding
                .iter()
                .zip(query_embedding)
                .map(|(a, b)| a * b)
                .sum();
            (i, sim)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let truncated = k > scored.len();
    scored.truncate(k);
    Ok(IclSelection {
        indices: scored.into_iter().map(|(i, _)| i).collect(),
        truncated_to_pool: truncated,
    })
}

/// Prepend selected examples to a user text as (question, answer) pairs.
/// Examples render without their own graph slots.
pub fn prepend_icl_examples(user_text: &str, pool: &IclPool, selection: &IclSelection) -> String {
    if selection.indices.is_empty() {
        return user_text.to_string();
    }
    let mut out = String::new();
    for (n, &i) in selection.indices.iter().enumerate() {
        let c = &pool.candidates[i];
        out.push_str(&format!(
            "Example {}: {} Answer: {}\n",
            n + 1,
            c.question,
            c.answer
        ));
    }
    out.push('\n');
    out.push_str(user_text);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: Vec<f32>) -> Vec<f32> {
        let n: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn pool_of(embs: Vec<Vec<f32>>) -> IclPool {
        let mut pool = IclPool::new(embs[0].len());
        for (i, e) in embs.into_iter().enumerate() {
            pool.push(IclCandidate {
                question: format!("q{i}"),
                subgraph: crate::graph::subgraph_from_triples(&[(
                    format!("a{i}"),
                    "r".into(),
                    format!("b{i}"),
                )])
                .unwrap(),
                embedding: e,
                answer: format!("ans{i}"),
            })
            .unwrap();
        }
        pool
    }

    #[test]
    fn k_zero_selects_nothing() {
        let pool = pool_of(vec![unit(vec![1.0, 0.0])]);
        let sel = retrieve_icl(&pool, &unit(vec![1.0, 0.0]), 0).unwrap();
        assert!(sel.indices.is_empty());
        assert!(!sel.truncated_to_pool);
    }

    #[test]
    fn own_subgraph_ranks_first() {
        let q = unit(vec![0.3, 0.9, 0.1]);
        let pool = pool_of(vec![
            unit(vec![1.0, 0.0, 0.0]),
            q.clone(),
            unit(vec![0.0, 0.0, 1.0]),
        ]);
        let sel = retrieve_icl(&pool, &q, 2).unwrap();
        assert_eq!(sel.indices[0], 1);
    }

    #[test]
    fn oversized_k_returns_whole_pool_flagged() {
        let pool = pool_of(vec![unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0])]);
        let sel = retrieve_icl(&pool, &unit(vec![1.0, 1.0]), 10).unwrap();
        assert_eq!(sel.indices.len(), 2);
        assert!(sel.truncated_to_pool);
    }

    #[test]
    fn ties_break_to_lower_index() {
        let e = unit(vec![1.0, 0.0]);
        let pool = pool_of(vec![e.clone(), e.clone(), e.clone()]);
        let sel = retrieve_icl(&pool, &e, 2).unwrap();
        assert_eq!(sel.indices, vec![0, 1]);
    }

    #[test]
    fn unnormalized_pool_entries_are_rejected() {
        let mut pool = IclPool::new(2);
        let err = pool.push(IclCandidate {
            question: "q".into(),
            subgraph: crate::graph::subgraph_from_triples(&[(
                "a".into(),
                "r".into(),
                "b".into(),
            )])
            .unwrap(),
            embedding: vec![2.0, 0.0],
            answer: "x".into(),
        });
        assert!(matches!(err, Err(PromptError::PoolNotNormalized { .. })));
    }

    #[test]
    fn examples_render_before_the_question() {
        let pool = pool_of(vec![unit(vec![1.0, 0.0])]);
        let sel = retrieve_icl(&pool, &unit(vec![1.0, 0.0]), 1).unwrap();
        let text = prepend_icl_examples("Given a question...", &pool, &sel);
        assert!(text.starts_with("Example 1: q0 Answer: ans0\n\n"));
        assert!(text.ends_with("Given a question..."));
    }
}

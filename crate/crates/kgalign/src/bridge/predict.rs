//! Answer normalization and task-level prediction wrappers.

use std::collections::HashMap;

use crate::kg::{EntityId, KnowledgeGraph};

use super::{Backend, RenderedPrompt, Result};

/// Lowercase, trim, and strip trailing ASCII punctuation; returns the label
/// when the remainder is exactly "true" or "false".
pub fn normalize_tc_answer(raw: &str) -> Option<bool> {
    let t = raw
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim()
        .to_lowercase();
    match t.as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

/// Lowercase, strip punctuation, collapse whitespace.
pub fn normalize_answer(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut last_space = true;
    for c in raw.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
            last_space = false;
        } else if !last_space {
            out.push(' ');
            last_space = true;
        }
    }
    out.trim_end().to_string()
}

/// Normalized entity-name lookup; on collisions the lower entity id wins.
#[derive(Debug, Clone, Default)]
pub struct NameIndex {
    map: HashMap<String, EntityId>,
}

impl NameIndex {
    pub fn build(kg: &KnowledgeGraph) -> Self {
        let mut map = HashMap::new();
        for e in kg.entities() {
            map.entry(normalize_answer(kg.name_of(e))).or_insert(e);
        }
        Self { map }
    }

    pub fn lookup(&self, raw_answer: &str) -> Option<EntityId> {
        self.map.get(&normalize_answer(raw_answer)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcPrediction {
    pub label: bool,
    pub raw: String,
    /// True when the raw answer parsed as neither label and was scored
    /// conservatively as negative.
    pub parse_failure: bool,
}

/// Classify via one generation; unparsable answers count as negative.
pub fn predict_tc(
    prompt: &RenderedPrompt,
    slots: &[Vec<f32>],
    backend: &dyn Backend,
) -> Result<TcPrediction> {
    let generations = backend.generate(prompt, slots, 1)?;
    let raw = generations
        .first()
        .map(|g| g.text.clone())
        .unwrap_or_default();
    Ok(match normalize_tc_answer(&raw) {
        Some(label) => TcPrediction {
            label,
            raw,
            parse_failure: false,
        },
        None => TcPrediction {
            label: false,
            raw,
            parse_failure: true,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedAnswer {
    pub raw: String,
    pub normalized: String,
    /// Entity the normalized answer resolved to, if any.
    pub entity: Option<EntityId>,
}

/// Generate up to `n` answers, normalize them, resolve against the entity
/// name index, and drop duplicates (first occurrence wins rank).
pub fn predict_lp(
    prompt: &RenderedPrompt,
    slots: &[Vec<f32>],
    backend: &dyn Backend,
    names: &NameIndex,
    n: usize,
) -> Result<Vec<RankedAnswer>> {
    let generations = backend.generate(prompt, slots, n)?;
    let mut out: Vec<RankedAnswer> = Vec::new();
    for g in generations {
        let normalized = normalize_answer(&g.text);
        if out.iter().any(|a| a.normalized == normalized) {
            continue;
        }
        let entity = names.lookup(&g.text);
        out.push(RankedAnswer {
            raw: g.text,
            normalized,
            entity,
        });
    }
    Ok(out)
}

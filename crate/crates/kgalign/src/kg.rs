//! Knowledge-graph data model, dataset ingestion, alignment-pair
//! construction, negative sampling, and description noise injection.
//!
//! Datasets arrive as tab-separated triple files (`train.tsv`, `valid.tsv`,
//! `test.tsv`, with `.txt` accepted as a fallback extension), plus optional
//! `entity_names.tsv` and `entity_descriptions.tsv` mapping the raw entity
//! surface to a short name and a paragraph. Classification gold labels for
//! valid/test ride in sidecar `valid_labels.tsv` / `test_labels.tsv` files,
//! one `0`/`1` per line, aligned with the triple files.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeedTree;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: expected exactly 3 tab-separated columns, got {cols}")]
    MalformedLine {
        file: PathBuf,
        line: usize,
        cols: usize,
    },
    #[error("{file}:{line}: {msg}")]
    BadRecord {
        file: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("missing required file {0}")]
    MissingFile(PathBuf),
    #[error("unknown {kind} {surface:?} in {split} split (rerun with unseen entities allowed to add it)")]
    UnknownInEval {
        kind: &'static str,
        surface: String,
        split: String,
    },
    #[error("duplicate triple at {file}:{line}")]
    DuplicateTriple { file: PathBuf, line: usize },
    #[error("splits are not disjoint: a {split} triple already appears in an earlier split")]
    OverlappingSplits { split: String },
    #[error("label file {file} has {labels} labels for {triples} triples")]
    LabelCountMismatch {
        file: PathBuf,
        labels: usize,
        triples: usize,
    },
    #[error("no valid corruption exists for the given triple")]
    NoValidCorruption,
    #[error("noise rate {0} outside [0, 1]")]
    RateOutOfRange(f64),
    #[error("no donor paragraph differs from the original for pair {0}")]
    NoDistinctDonor(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Dense entity index. The surface string lives in the [`KnowledgeGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

/// Dense relation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Entities, relations, the training-graph edges, and per-entity text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    entity_surfaces: Vec<String>,
    relation_surfaces: Vec<String>,
    #[serde(skip)]
    entity_index: HashMap<String, EntityId>,
    #[serde(skip)]
    relation_index: HashMap<String, RelationId>,
    names: Vec<String>,
    descriptions: Vec<Option<String>>,
    /// Graph edges; identical to the training split.
    pub triples: Vec<Triple>,
}

impl KnowledgeGraph {
    fn empty() -> Self {
        Self {
            entity_surfaces: Vec::new(),
            relation_surfaces: Vec::new(),
            entity_index: HashMap::new(),
            relation_index: HashMap::new(),
            names: Vec::new(),
            descriptions: Vec::new(),
            triples: Vec::new(),
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entity_surfaces.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_surfaces.len()
    }

    pub fn entity_id(&self, surface: &str) -> Option<EntityId> {
        self.entity_index.get(surface).copied()
    }

    pub fn relation_id(&self, surface: &str) -> Option<RelationId> {
        self.relation_index.get(surface).copied()
    }

    pub fn entity_surface(&self, e: EntityId) -> &str {
        &self.entity_surfaces[e.index()]
    }

    pub fn relation_surface(&self, r: RelationId) -> &str {
        &self.relation_surfaces[r.index()]
    }

    /// Short display name; the raw surface when no names file was given.
    pub fn name_of(&self, e: EntityId) -> &str {
        &self.names[e.index()]
    }

    /// The stored paragraph, or the entity name when the paragraph is
    /// absent or blank.
    pub fn description_of(&self, e: EntityId) -> &str {
        match &self.descriptions[e.index()] {
            Some(d) if !d.trim().is_empty() => d,
            _ => self.name_of(e),
        }
    }

    pub fn has_description(&self, e: EntityId) -> bool {
        matches!(&self.descriptions[e.index()], Some(d) if !d.trim().is_empty())
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entity_count() as u32).map(EntityId)
    }

    fn intern_entity(&mut self, surface: &str) -> EntityId {
        if let Some(&id) = self.entity_index.get(surface) {
            return id;
        }
        let id = EntityId(self.entity_surfaces.len() as u32);
        self.entity_surfaces.push(surface.to_string());
        self.names.push(surface.to_string());
        self.descriptions.push(None);
        self.entity_index.insert(surface.to_string(), id);
        id
    }

    fn intern_relation(&mut self, surface: &str) -> RelationId {
        if let Some(&id) = self.relation_index.get(surface) {
            return id;
        }
        let id = RelationId(self.relation_surfaces.len() as u32);
        self.relation_surfaces.push(surface.to_string());
        self.relation_index.insert(surface.to_string(), id);
        id
    }

    /// Rebuild the surface lookup maps after deserialization.
    pub fn rebuild_indexes(&mut self) {
        self.entity_index = self
            .entity_surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), EntityId(i as u32)))
            .collect();
        self.relation_index = self
            .relation_surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), RelationId(i as u32)))
            .collect();
    }

    pub fn set_name(&mut self, e: EntityId, name: String) {
        self.names[e.index()] = name;
    }

    pub fn set_description(&mut self, e: EntityId, text: Option<String>) {
        self.descriptions[e.index()] = text;
    }
}

/// Incremental in-memory construction, used by generators and tests.
#[derive(Debug, Default)]
pub struct KgBuilder {
    kg: Option<KnowledgeGraph>,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self {
            kg: Some(KnowledgeGraph::empty()),
        }
    }

    fn inner(&mut self) -> &mut KnowledgeGraph {
        self.kg.as_mut().expect("builder already consumed")
    }

    pub fn entity(&mut self, surface: &str) -> EntityId {
        self.inner().intern_entity(surface)
    }

    pub fn relation(&mut self, surface: &str) -> RelationId {
        self.inner().intern_relation(surface)
    }

    pub fn triple(&mut self, head: EntityId, relation: RelationId, tail: EntityId) {
        let t = Triple::new(head, relation, tail);
        self.inner().triples.push(t);
    }

    pub fn set_name(&mut self, e: EntityId, name: &str) {
        self.inner().set_name(e, name.to_string());
    }

    pub fn set_description(&mut self, e: EntityId, text: &str) {
        self.inner().set_description(e, Some(text.to_string()));
    }

    pub fn build(mut self) -> KnowledgeGraph {
        self.kg.take().expect("builder already consumed")
    }
}

/// Train/valid/test triples plus optional classification gold labels.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub valid_labels: Option<Vec<bool>>,
    pub test_labels: Option<Vec<bool>>,
}

impl DatasetSplit {
    /// Membership set over every split, used to collision-check negatives.
    pub fn all_triples(&self) -> HashSet<Triple> {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .copied()
            .collect()
    }
}

/// One entity paired with the text that describes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDescriptionPair {
    pub entity: EntityId,
    pub text: String,
}

/// One extraction-built subgraph paired with its source paragraph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgraphDocumentPair {
    pub subgraph: crate::graph::Subgraph,
    pub document: String,
}

/// What to do with valid/test entities or relations absent from train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnseenPolicy {
    /// Fail loading with a clear error.
    #[default]
    Reject,
    /// Add them with empty neighborhoods.
    Allow,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub unseen: UnseenPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Published statistics for the common benchmark datasets, keyed by a
/// lowercase substring of the dataset directory name.
pub const KNOWN_DATASET_STATS: &[(&str, LoadSummary)] = &[
    (
        "fb15k-237n",
        LoadSummary {
            entities: 13_104,
            relations: 93,
            train: 87_282,
            valid: 7_041,
            test: 8_226,
        },
    ),
    (
        "codex-s",
        LoadSummary {
            entities: 2_034,
            relations: 42,
            train: 32_888,
            valid: 1_827,
            test: 1_828,
        },
    ),
    (
        "fb15k-237",
        LoadSummary {
            entities: 14_505,
            relations: 237,
            train: 272_115,
            valid: 17_535,
            test: 20_466,
        },
    ),
    (
        "yago3-10",
        LoadSummary {
            entities: 123_182,
            relations: 37,
            train: 1_079_040,
            valid: 5_000,
            test: 5_000,
        },
    ),
];

/// Reference statistics matching the directory name, most specific first.
pub fn known_stats_for(dir_name: &str) -> Option<&'static LoadSummary> {
    let lower = dir_name.to_lowercase();
    // "fb15k-237n" must win over its prefix "fb15k-237".
    let mut best: Option<(&str, &LoadSummary)> = None;
    for (key, stats) in KNOWN_DATASET_STATS {
        if lower.contains(key) && best.map_or(true, |(bk, _)| key.len() > bk.len()) {
            best = Some((key, stats));
        }
    }
    best.map(|(_, s)| s)
}

fn find_split_file(dir: &Path, stem: &str) -> Option<PathBuf> {
    for ext in ["tsv", "txt"] {
        let p = dir.join(format!("{stem}.{ext}"));
        if p.is_file() {
            return Some(p);
        }
    }
    None
}

fn parse_triple_file(path: &Path) -> Result<Vec<[String; 3]>> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(DataError::MalformedLine {
                file: path.to_path_buf(),
                line: i + 1,
                cols: cols.len(),
            });
        }
        out.push([cols[0].to_string(), cols[1].to_string(), cols[2].to_string()]);
    }
    Ok(out)
}

fn unescape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Escape tabs, newlines and backslashes for the descriptions TSV.
pub fn escape_paragraph(text: &str) -> String {
    text.replace('\\', "\\\\")
        .replace('\t', "\\t")
        .replace('\n', "\\n")
        .replace('\r', "\\n")
}

fn parse_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('\t') else {
            return Err(DataError::BadRecord {
                file: path.to_path_buf(),
                line: i + 1,
                msg: "expected surface<TAB>text".into(),
            });
        };
        out.push((k.to_string(), unescape(v)));
    }
    Ok(out)
}

fn parse_label_file(path: &Path) -> Result<Vec<bool>> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        match line.trim() {
            "" => continue,
            "0" => out.push(false),
            "1" => out.push(true),
            other => {
                return Err(DataError::BadRecord {
                    file: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected 0 or 1, got {other:?}"),
                })
            }
        }
    }
    Ok(out)
}

/// Load a dataset directory. Ids are assigned contiguously in
/// first-appearance order: train first, then valid, then test.
pub fn load_dataset(dir: &Path, options: &LoadOptions) -> Result<(KnowledgeGraph, DatasetSplit)> {
    let train_path = find_split_file(dir, "train")
        .ok_or_else(|| DataError::MissingFile(dir.join("train.tsv")))?;
    let raw_train = parse_triple_file(&train_path)?;
    if raw_train.is_empty() {
        return Err(DataError::EmptySplit("train".into()));
    }

    let mut kg = KnowledgeGraph::empty();
    let mut split = DatasetSplit::default();
    let mut seen: HashSet<Triple> = HashSet::new();

    for (i, [h, r, t]) in raw_train.iter().enumerate() {
        let triple = Triple::new(
            kg.intern_entity(h),
            kg.intern_relation(r),
            kg.intern_entity(t),
        );
        if !seen.insert(triple) {
            return Err(DataError::DuplicateTriple {
                file: train_path.clone(),
                line: i + 1,
            });
        }
        split.train.push(triple);
    }

    for stem in ["valid", "test"] {
        let Some(path) = find_split_file(dir, stem) else {
            continue;
        };
        let raw = parse_triple_file(&path)?;
        let mut triples = Vec::with_capacity(raw.len());
        let mut split_seen: HashSet<Triple> = HashSet::new();
        for (i, [h, r, t]) in raw.iter().enumerate() {
            let mut resolve_entity = |surface: &String| match (kg.entity_id(surface), options.unseen)
            {
                (Some(id), _) => Ok(id),
                (None, UnseenPolicy::Allow) => Ok(kg.intern_entity(surface)),
                (None, UnseenPolicy::Reject) => Err(DataError::UnknownInEval {
                    kind: "entity",
                    surface: surface.clone(),
                    split: stem.into(),
                }),
            };
            let head = resolve_entity(h)?;
            let tail = resolve_entity(t)?;
            let rel = match (kg.relation_id(r), options.unseen) {
                (Some(id), _) => id,
                (None, UnseenPolicy::Allow) => kg.intern_relation(r),
                (None, UnseenPolicy::Reject) => {
                    return Err(DataError::UnknownInEval {
                        kind: "relation",
                        surface: r.clone(),
                        split: stem.into(),
                    })
                }
            };
            let triple = Triple::new(head, rel, tail);
            if !split_seen.insert(triple) {
                return Err(DataError::DuplicateTriple {
                    file: path.clone(),
                    line: i + 1,
                });
            }
            if seen.contains(&triple) {
                return Err(DataError::OverlappingSplits { split: stem.into() });
            }
            triples.push(triple);
        }
        seen.extend(&split_seen);

        let labels_path = dir.join(format!("{stem}_labels.tsv"));
        let labels = if labels_path.is_file() {
            let labels = parse_label_file(&labels_path)?;
            if labels.len() != triples.len() {
                return Err(DataError::LabelCountMismatch {
                    file: labels_path,
                    labels: labels.len(),
                    triples: triples.len(),
                });
            }
            Some(labels)
        } else {
            None
        };
        match stem {
            "valid" => {
                split.valid = triples;
                split.valid_labels = labels;
            }
            _ => {
                split.test = triples;
                split.test_labels = labels;
            }
        }
    }

    if let Some(path) = ["entity_names.tsv", "entity_names.txt"]
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
    {
        for (surface, name) in parse_kv_file(&path)? {
            if let Some(id) = kg.entity_id(&surface) {
                kg.set_name(id, name);
            }
        }
    }
    if let Some(path) = ["entity_descriptions.tsv", "entity_descriptions.txt"]
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
    {
        for (surface, text) in parse_kv_file(&path)? {
            if let Some(id) = kg.entity_id(&surface) {
                kg.set_description(id, Some(text));
            }
        }
    }

    kg.triples = split.train.clone();
    Ok((kg, split))
}

pub fn summarize(kg: &KnowledgeGraph, split: &DatasetSplit) -> LoadSummary {
    LoadSummary {
        entities: kg.entity_count(),
        relations: kg.relation_count(),
        train: split.train.len(),
        valid: split.valid.len(),
        test: split.test.len(),
    }
}

/// One pair per entity, in entity index order.
pub fn build_node_pairs(kg: &KnowledgeGraph) -> Vec<NodeDescriptionPair> {
    kg.entities()
        .map(|e| NodeDescriptionPair {
            entity: e,
            text: kg.description_of(e).to_string(),
        })
        .collect()
}

/// Replace the tail with a uniformly sampled entity such that the corrupted
/// triple collides with no known triple. Deterministic for a fixed seed.
pub fn corrupt_triple(
    kg: &KnowledgeGraph,
    known: &HashSet<Triple>,
    triple: Triple,
    seed: u64,
) -> Result<Triple> {
    let n = kg.entity_count() as u32;
    let mut rng = SeedTree::new(seed).rng("corrupt-tail");
    // Fast path: rejection sampling. Fall back to exact enumeration so
    // exhaustion is detected rather than spun on.
    for _ in 0..64 {
        let candidate = EntityId(rng.gen_range(0..n));
        let corrupted = Triple::new(triple.head, triple.relation, candidate);
        if !known.contains(&corrupted) {
            return Ok(corrupted);
        }
    }
    let allowed: Vec<u32> = (0..n)
        .filter(|&t| !known.contains(&Triple::new(triple.head, triple.relation, EntityId(t))))
        .collect();
    if allowed.is_empty() {
        return Err(DataError::NoValidCorruption);
    }
    let pick = allowed[rng.gen_range(0..allowed.len())];
    Ok(Triple::new(triple.head, triple.relation, EntityId(pick)))
}

/// Replace the text of exactly `round(rate * len)` pairs with a paragraph
/// drawn from the corpus that differs from the original. Selection and
/// donors are deterministic per seed.
pub fn inject_description_noise(
    pairs: &[NodeDescriptionPair],
    rate: f64,
    corpus: &[String],
    seed: u64,
) -> Result<Vec<NodeDescriptionPair>> {
    if !(0.0..=1.0).contains(&rate) || rate.is_nan() {
        return Err(DataError::RateOutOfRange(rate));
    }
    let mut out = pairs.to_vec();
    let count = (rate * pairs.len() as f64).round() as usize;
    if count == 0 {
        return Ok(out);
    }
    let tree = SeedTree::new(seed);
    let mut pick_rng = tree.rng("noise-select");
    // Partial Fisher-Yates: the first `count` slots of a shuffled index
    // vector, deterministic per seed.
    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    for i in 0..count.min(pairs.len().saturating_sub(1)) {
        let j = pick_rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    let mut donor_rng = tree.rng("noise-donor");
    for &i in indices.iter().take(count) {
        let original = &pairs[i].text;
        let mut donor = None;
        for _ in 0..corpus.len().max(1) * 8 {
            let c = &corpus[donor_rng.gen_range(0..corpus.len())];
            if c != original {
                donor = Some(c.clone());
                break;
            }
        }
        out[i].text = donor.ok_or(DataError::NoDistinctDonor(i))?;
    }
    Ok(out)
}

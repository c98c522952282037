//! Prompt assembly: instruction templates with graph-embedding slots,
//! document-extraction prompts, and structural in-context example retrieval.

mod extraction;
mod icl;
pub mod templates;

pub use extraction::{build_extraction_prompt, parse_extraction, ExtractionParse};
pub use icl::{prepend_icl_examples, retrieve_icl, IclCandidate, IclPool, IclSelection};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Subgraph;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{mode:?} mode requires a subgraph")]
    MissingSubgraph { mode: GraphMode },
    #[error("no template exists for {task:?} {mode:?} with resources {resources:?}")]
    UnknownCombination {
        task: TaskKind,
        mode: GraphMode,
        resources: ResourceAugmentation,
    },
    #[error("cannot build an extraction prompt from an empty document")]
    EmptyDocument,
    #[error("no parsable (source, relation, target) tuples in the text")]
    NoTuples,
    #[error("in-context pool embedding dim {got} does not match {want}")]
    PoolDimMismatch { got: usize, want: usize },
    #[error("in-context pool embedding {index} is not L2-normalized")]
    PoolNotNormalized { index: usize },
}

pub type Result<T> = std::result::Result<T, PromptError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    TripleClassification,
    LinkPrediction,
}

/// How much graph information the instruction carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    /// No graph information at all.
    Base,
    /// Embeddings of the query anchors only.
    Triple,
    /// Embeddings of the whole query subgraph.
    #[default]
    Graph,
}

/// Optional text resources appended to the instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResourceAugmentation {
    pub names: bool,
    pub descriptions: bool,
}

impl ResourceAugmentation {
    pub const NONE: Self = Self {
        names: false,
        descriptions: false,
    };

    pub fn any(&self) -> bool {
        self.names || self.descriptions
    }
}

/// The query an instruction is rendered around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Query {
    /// Judge a full triple.
    Classify(Triple),
    /// Fill the tail of (head, relation, ?).
    PredictTail { head: EntityId, relation: RelationId },
}

impl Query {
    pub fn task(&self) -> TaskKind {
        match self {
            Query::Classify(_) => TaskKind::TripleClassification,
            Query::PredictTail { .. } => TaskKind::LinkPrediction,
        }
    }

    /// Entities the query is anchored on: (h, t) for classification,
    /// (h,) for tail prediction.
    pub fn anchors(&self) -> Vec<EntityId> {
        match self {
            Query::Classify(t) => {
                if t.head == t.tail {
                    vec![t.head]
                } else {
                    vec![t.head, t.tail]
                }
            }
            Query::PredictTail { head, .. } => vec![*head],
        }
    }
}

/// A rendered instruction: system text, user text with inline slot markers,
/// and the entity binding of each marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    /// The substituted {triple} / {question} string.
    pub question: String,
    pub user_text: String,
    /// Slot markers in order of appearance.
    pub slots: Vec<String>,
    /// Entity behind each slot marker, same order.
    pub slot_entities: Vec<EntityId>,
    pub resource_text: Option<String>,
    pub target: Option<String>,
}

pub fn slot_marker(i: usize) -> String {
    format!("<gemb_{i}>")
}

fn render_triple(kg: &KnowledgeGraph, t: &Triple) -> String {
    format!(
        "({}, {}, {})",
        kg.name_of(t.head),
        kg.relation_surface(t.relation),
        kg.name_of(t.tail)
    )
}

fn render_question(kg: &KnowledgeGraph, head: EntityId, relation: RelationId) -> String {
    format!("({}, {}, ?)", kg.name_of(head), kg.relation_surface(relation))
}

/// Fill the exact template for (task, mode, resources).
///
/// Graph and Triple modes require a subgraph; resources attach only in
/// Graph mode. In Graph mode each subgraph node gets one slot marker, except
/// the names-plus-descriptions combination whose template carries no
/// embedding sequence. In Triple mode the slots are the query anchors.
pub fn render_prompt(
    kg: &KnowledgeGraph,
    query: &Query,
    mode: GraphMode,
    resources: ResourceAugmentation,
    subgraph: Option<&Subgraph>,
    target: Option<String>,
) -> Result<Prompt> {
    let task = query.task();
    if resources.any() && mode != GraphMode::Graph {
        return Err(PromptError::UnknownCombination {
            task,
            mode,
            resources,
        });
    }
    let subgraph = match mode {
        GraphMode::Base => None,
        GraphMode::Triple | GraphMode::Graph => Some(
            subgraph.ok_or(PromptError::MissingSubgraph { mode })?,
        ),
    };

    let noun = match task {
        TaskKind::TripleClassification => "triple",
        TaskKind::LinkPrediction => "question",
    };
    let question = match query {
        Query::Classify(t) => render_triple(kg, t),
        Query::PredictTail { head, relation } => render_question(kg, *head, *relation),
    };

    let mut sentences: Vec<String> = Vec::new();
    match task {
        TaskKind::TripleClassification => {
            sentences.push(templates::TC_QUERY_INTRO.replace("{triple}", &question));
        }
        TaskKind::LinkPrediction => {
            sentences.push(templates::LP_QUERY_INTRO.replace("{question}", &question));
        }
    }

    // Slot markers and their entity bindings.
    let (slot_entities, slots): (Vec<EntityId>, Vec<String>) = match mode {
        GraphMode::Base => (Vec::new(), Vec::new()),
        GraphMode::Triple => {
            let anchors = query.anchors();
            let markers = (0..anchors.len()).map(slot_marker).collect();
            (anchors, markers)
        }
        GraphMode::Graph if resources.names && resources.descriptions => {
            (Vec::new(), Vec::new())
        }
        GraphMode::Graph => {
            let sg = subgraph.expect("checked above");
            let markers = (0..sg.nodes.len()).map(slot_marker).collect();
            (sg.nodes.clone(), markers)
        }
    };
    let graph_seq = slots.join(" ");

    match mode {
        GraphMode::Base => {}
        GraphMode::Triple => {
            sentences.push(
                templates::ANCHOR_EMBEDDINGS
                    .replace("{graph}", &graph_seq)
                    .replace("{noun}", noun),
            );
        }
        GraphMode::Graph => {
            if resources.names && resources.descriptions {
                sentences.push(templates::SUBGRAPH_PLAIN.replace("{noun}", noun));
            } else {
                sentences.push(
                    templates::SUBGRAPH_EMBEDDINGS
                        .replace("{graph}", &graph_seq)
                        .replace("{noun}", noun),
                );
            }
        }
    }

    let mut resource_text = None;
    if resources.any() {
        let sg = subgraph.expect("resources imply Graph mode");
        let name_list = sg
            .nodes
            .iter()
            .map(|&e| kg.name_of(e).to_string())
            .collect::<Vec<_>>()
            .join("; ");
        let desc_list = sg
            .nodes
            .iter()
            .map(|&e| kg.description_of(e).to_string())
            .collect::<Vec<_>>()
            .join("; ");
        let sentence = match (resources.names, resources.descriptions) {
            (true, false) => templates::RESOURCE_NAMES.replace("{name}", &name_list),
            (false, true) => {
                templates::RESOURCE_DESCRIPTIONS.replace("{description}", &desc_list)
            }
            (true, true) => templates::RESOURCE_BOTH
                .replace("{name}", &name_list)
                .replace("{description}", &desc_list),
            (false, false) => unreachable!(),
        };
        resource_text = Some(sentence.clone());
        sentences.push(sentence);
    }

    match task {
        TaskKind::TripleClassification => sentences.push(templates::TC_ASK.to_string()),
        TaskKind::LinkPrediction => sentences.push(templates::LP_ASK.to_string()),
    }

    Ok(Prompt {
        system: templates::SYSTEM_INSTRUCTION.to_string(),
        question,
        user_text: sentences.join(" "),
        slots,
        slot_entities,
        resource_text,
        target,
    })
}

/// One JSON line per prompt: {system, user_text, slots, target} plus the
/// machine-facing extras needed to execute it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptRecord {
    pub system: String,
    pub user_text: String,
    pub slots: Vec<String>,
    pub target: Option<String>,
    pub slot_entities: Vec<EntityId>,
    pub task: TaskKind,
    pub question: String,
    /// Query subgraph, kept when in-context retrieval needs it downstream.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subgraph: Option<Subgraph>,
}

impl PromptRecord {
    pub fn from_prompt(prompt: &Prompt, task: TaskKind, subgraph: Option<Subgraph>) -> Self {
        Self {
            system: prompt.system.clone(),
            user_text: prompt.user_text.clone(),
            slots: prompt.slots.clone(),
            target: prompt.target.clone(),
            slot_entities: prompt.slot_entities.clone(),
            task,
            question: prompt.question.clone(),
            subgraph,
        }
    }
}

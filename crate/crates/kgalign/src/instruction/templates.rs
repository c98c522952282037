//! Instruction template text. Treat every string here as frozen: the golden
//! files under tests/golden pin the rendered output byte for byte.

/// System instruction shared by both KGC tasks.
pub const SYSTEM_INSTRUCTION: &str = "You are an assistant specializing in large language models and knowledge graphs. Please follow the instructions carefully and provide your responses.";

pub const TC_QUERY_INTRO: &str =
    "Given a triple {triple} that consists of a head entity, a relation, and a tail entity.";
pub const LP_QUERY_INTRO: &str =
    "Given a question:{question} that represents a natural language question.";

/// Graph-information sentence, Triple mode: embeddings of the anchors only.
pub const ANCHOR_EMBEDDINGS: &str =
    "Given a sequence of graph embeddings {graph} that represent the anchor entities of the {noun}.";
/// Graph-information sentence, Graph mode.
pub const SUBGRAPH_EMBEDDINGS: &str =
    "Given a sequence of graph embeddings {graph} that represent a subgraph of the {noun} extracted from a knowledge graph.";
/// Graph-information sentence when names and descriptions are both attached;
/// this variant carries no embedding slots.
pub const SUBGRAPH_PLAIN: &str =
    "Given a subgraph of the {noun} extracted from a knowledge graph.";

pub const RESOURCE_NAMES: &str =
    "Each graph node contains an entity name. Here is a list of entity names: {name}.";
pub const RESOURCE_DESCRIPTIONS: &str =
    "Each graph node contains an entity description. Here is a list of entity textual descriptions: {description}.";
pub const RESOURCE_BOTH: &str =
    "Each graph node contains an entity name and its textual description information. Here is a list of entity information: {name} and {description}.";

pub const TC_ASK: &str =
    "Please determine the correctness of the input triple and response True or False.";
pub const LP_ASK: &str =
    "Please answer the input question, and keep the answer as simple as possible.";

/// Document-extraction instruction with its one-shot example.
pub const EXTRACTION_INSTRUCTION: &str = "Given a document, please extrapolate as many relationships as you can from the document and generate triples like (source, relation, target).";

pub const EXTRACTION_EXAMPLE_INPUT: &str = "Steven Paul Jobs was an American businessman, inventor, and investor best known for co-founding the technology giant Apple Inc. Jobs was also the founder of NeXT and chairman and majority shareholder of Pixar. He was a pioneer of the personal computer revolution of the 1970s and 1980s, along with his early business partner and fellow Apple co-founder Steve Wozniak.";

pub const EXTRACTION_EXAMPLE_OUTPUT: &str = "(Steven Paul Jobs, nationality, American); (Steven Paul Jobs, occupation, businessman); (Steven Paul Jobs, occupation, inventor); (Steven Paul Jobs, co-founder of, Apple Inc.); (Steven Paul Jobs, founder of, NeXT); (Steven Paul Jobs, chairman of, Pixar); (Steven Paul Jobs, business partner, Steve Wozniak);";

//! Adjacency indexing and anchored k-hop subgraph extraction.
//!
//! Hops are undirected: a triple connects its endpoints for reachability
//! regardless of direction. Only training triples are indexed, which keeps
//! evaluation edges out of every extracted neighborhood.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, Triple};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown anchor entity index {0}")]
    UnknownAnchor(u32),
    #[error("node cap {cap} is below the anchor count {anchors}")]
    CapBelowAnchors { cap: usize, anchors: usize },
    #[error("cannot build a subgraph from an empty triple list")]
    EmptyTripleList,
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Per-entity incidence lists over the training triples. A triple appears in
/// the list of its head and of its tail, once each (once total for self
/// loops).
#[derive(Debug, Clone)]
pub struct AdjacencyIndex {
    entity_count: usize,
    triples: Vec<Triple>,
    incident: Vec<Vec<u32>>,
}

impl AdjacencyIndex {
    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Triples incident to an entity, in insertion order.
    pub fn incident(&self, e: EntityId) -> impl Iterator<Item = Triple> + '_ {
        self.incident[e.index()].iter().map(|&i| self.triples[i as usize])
    }

    pub fn degree(&self, e: EntityId) -> usize {
        self.incident[e.index()].len()
    }
}

/// Index the training triples of a graph.
pub fn build_index(kg: &KnowledgeGraph) -> AdjacencyIndex {
    let mut incident = vec![Vec::new(); kg.entity_count()];
    for (i, t) in kg.triples.iter().enumerate() {
        incident[t.head.index()].push(i as u32);
        if t.tail != t.head {
            incident[t.tail.index()].push(i as u32);
        }
    }
    AdjacencyIndex {
        entity_count: kg.entity_count(),
        triples: kg.triples.clone(),
        incident,
    }
}

/// Names local to an extraction-built subgraph, absent for subgraphs over
/// knowledge-graph ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalVocab {
    pub entity_surfaces: Vec<String>,
    pub relation_surfaces: Vec<String>,
}

/// An anchored neighborhood or an extraction-built triple set.
///
/// `nodes` are ordered by (hop, entity index); anchors are hop 0. Every edge
/// endpoint is a member of `nodes`. When `local` is present, node and
/// relation ids index into it instead of a [`KnowledgeGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgraph {
    pub anchors: Vec<EntityId>,
    pub nodes: Vec<EntityId>,
    pub edges: Vec<Triple>,
    pub hop_of: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub local: Option<LocalVocab>,
}

impl Subgraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_local(&self) -> bool {
        self.local.is_some()
    }

    /// Position of a node within this subgraph.
    pub fn position_of(&self, e: EntityId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == e)
    }

    /// Stable JSON form used as the wire format.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("subgraph serialization cannot fail")
    }
}

/// Extract all entities within `k` undirected hops of the anchors, truncated
/// to `node_cap` nodes in (hop, entity index) order, plus every indexed
/// triple with both endpoints inside. `exclude` drops one triple from both
/// traversal and the edge set, used to keep a query triple out of its own
/// context.
pub fn extract_khop(
    index: &AdjacencyIndex,
    anchors: &[EntityId],
    k: usize,
    node_cap: usize,
    exclude: Option<Triple>,
) -> Result<Subgraph> {
    if node_cap < anchors.len() {
        return Err(GraphError::CapBelowAnchors {
            cap: node_cap,
            anchors: anchors.len(),
        });
    }
    for &a in anchors {
        if a.index() >= index.entity_count {
            return Err(GraphError::UnknownAnchor(a.0));
        }
    }

    // Layered BFS: each layer is gathered from the whole frontier, then
    // sorted, so node order is (hop, entity index) and deterministic.
    let mut hop: HashMap<EntityId, usize> = HashMap::new();
    let mut frontier: BTreeSet<EntityId> = anchors.iter().copied().collect();
    for &a in &frontier {
        hop.insert(a, 0);
    }
    let mut nodes: Vec<EntityId> = frontier.iter().copied().collect();
    for level in 1..=k {
        let mut next: BTreeSet<EntityId> = BTreeSet::new();
        for &u in &frontier {
            for t in index.incident(u) {
                if Some(t) == exclude {
                    continue;
                }
                for v in [t.head, t.tail] {
                    if !hop.contains_key(&v) {
                        next.insert(v);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        for &v in &next {
            hop.insert(v, level);
        }
        nodes.extend(next.iter().copied());
        frontier = next;
    }
    nodes.truncate(node_cap);

    let node_set: BTreeSet<EntityId> = nodes.iter().copied().collect();
    let mut edge_set: BTreeSet<Triple> = BTreeSet::new();
    for &n in &nodes {
        for t in index.incident(n) {
            if Some(t) == exclude {
                continue;
            }
            if node_set.contains(&t.head) && node_set.contains(&t.tail) {
                edge_set.insert(t);
            }
        }
    }

    let hop_of = nodes.iter().map(|n| hop[n]).collect();
    Ok(Subgraph {
        anchors: anchors.to_vec(),
        nodes,
        edges: edge_set.into_iter().collect(),
        hop_of,
        local: None,
    })
}

/// Build a subgraph from raw string triples, as produced by document
/// extraction. Ids are local, assigned in first-appearance order; duplicate
/// triples are dropped.
pub fn subgraph_from_triples(triples: &[(String, String, String)]) -> Result<Subgraph> {
    if triples.is_empty() {
        return Err(GraphError::EmptyTripleList);
    }
    let mut entity_surfaces: Vec<String> = Vec::new();
    let mut relation_surfaces: Vec<String> = Vec::new();
    let mut entity_ids: HashMap<&str, EntityId> = HashMap::new();
    let mut relation_ids: HashMap<&str, crate::kg::RelationId> = HashMap::new();
    let mut edges: Vec<Triple> = Vec::new();
    let mut seen: BTreeSet<Triple> = BTreeSet::new();

    for (h, r, t) in triples {
        let head = *entity_ids.entry(h).or_insert_with(|| {
            entity_surfaces.push(h.clone());
            EntityId(entity_surfaces.len() as u32 - 1)
        });
        let tail = *entity_ids.entry(t).or_insert_with(|| {
            entity_surfaces.push(t.clone());
            EntityId(entity_surfaces.len() as u32 - 1)
        });
        let rel = *relation_ids.entry(r).or_insert_with(|| {
            relation_surfaces.push(r.clone());
            crate::kg::RelationId(relation_surfaces.len() as u32 - 1)
        });
        let triple = Triple::new(head, rel, tail);
        if seen.insert(triple) {
            edges.push(triple);
        }
    }

    let nodes: Vec<EntityId> = (0..entity_surfaces.len() as u32).map(EntityId).collect();
    let hop_of = vec![0; nodes.len()];
    Ok(Subgraph {
        anchors: Vec::new(),
        nodes,
        edges,
        hop_of,
        local: Some(LocalVocab {
            entity_surfaces,
            relation_surfaces,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KgBuilder;

    /// Entities n0000..n{n-1}, one relation, the given (head, tail) pairs.
    fn kg_from_edges(n: usize, edges: &[(u32, u32)]) -> KnowledgeGraph {
        let mut b = KgBuilder::new();
        for i in 0..n {
            b.entity(&format!("n{i:04}"));
        }
        let r = b.relation("r");
        for &(h, t) in edges {
            b.triple(EntityId(h), r, EntityId(t));
        }
        b.build()
    }

    fn eid(i: u32) -> EntityId {
        EntityId(i)
    }

    #[test]
    fn one_triple_indexes_both_endpoints() {
        let kg = kg_from_edges(2, &[(0, 1)]);
        let idx = build_index(&kg);
        assert_eq!(idx.degree(eid(0)), 1);
        assert_eq!(idx.degree(eid(1)), 1);
        assert_eq!(idx.incident(eid(0)).next(), idx.incident(eid(1)).next());
    }

    #[test]
    fn star_center_has_degree_five() {
        let kg = kg_from_edges(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
        let idx = build_index(&kg);
        assert_eq!(idx.degree(eid(0)), 5);
        for i in 1..=5 {
            assert_eq!(idx.degree(eid(i)), 1);
        }
    }

    #[test]
    fn degree_sum_counts_each_triple_twice_minus_self_loops() {
        let edges = &[(0, 1), (1, 2), (2, 2), (3, 0), (1, 3), (4, 4)];
        let kg = kg_from_edges(5, edges);
        let idx = build_index(&kg);
        let degree_sum: usize = kg.entities().map(|e| idx.degree(e)).sum();
        let self_loops = edges.iter().filter(|(h, t)| h == t).count();
        assert_eq!(degree_sum, 2 * edges.len() - self_loops);
    }

    #[test]
    fn zero_hops_returns_anchors_and_their_edges() {
        let kg = kg_from_edges(3, &[(0, 1), (1, 2), (0, 0)]);
        let idx = build_index(&kg);
        let sg = extract_khop(&idx, &[eid(0)], 0, 16, None).unwrap();
        assert_eq!(sg.nodes, vec![eid(0)]);
        assert_eq!(sg.hop_of, vec![0]);
        // Only the self loop has both endpoints among the anchors.
        assert_eq!(sg.edges.len(), 1);
        assert_eq!(sg.edges[0].head, eid(0));
        assert_eq!(sg.edges[0].tail, eid(0));
    }

    #[test]
    fn chain_two_hops_from_one_end() {
        let kg = kg_from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        let idx = build_index(&kg);
        let sg = extract_khop(&idx, &[eid(0)], 2, 16, None).unwrap();
        assert_eq!(sg.nodes, vec![eid(0), eid(1), eid(2)]);
        assert_eq!(sg.hop_of, vec![0, 1, 2]);
        assert_eq!(sg.edges.len(), 2, "edge (2,3) leaves the node set");
    }

    #[test]
    fn unknown_anchor_is_an_error() {
        let kg = kg_from_edges(2, &[(0, 1)]);
        let idx = build_index(&kg);
        assert!(matches!(
            extract_khop(&idx, &[EntityId(99)], 1, 16, None),
            Err(GraphError::UnknownAnchor(99))
        ));
    }

    #[test]
    fn cap_below_anchor_count_is_an_error() {
        let kg = kg_from_edges(2, &[(0, 1)]);
        let idx = build_index(&kg);
        assert!(matches!(
            extract_khop(&idx, &[eid(0), eid(1)], 1, 1, None),
            Err(GraphError::CapBelowAnchors { .. })
        ));
    }

    #[test]
    fn truncation_order_is_hop_then_index() {
        // Star with 5 spokes, cap 3: anchor plus the two lowest-id spokes.
        let kg = kg_from_edges(6, &[(0, 5), (0, 4), (0, 3), (0, 2), (0, 1)]);
        let idx = build_index(&kg);
        let sg = extract_khop(&idx, &[eid(0)], 1, 3, None).unwrap();
        assert_eq!(sg.nodes, vec![eid(0), eid(1), eid(2)]);
    }

    #[test]
    fn excluded_triple_never_appears_and_blocks_traversal() {
        let kg = kg_from_edges(3, &[(0, 1), (1, 2)]);
        let idx = build_index(&kg);
        let query = kg.triples[0];
        let sg = extract_khop(&idx, &[eid(0)], 2, 16, Some(query)).unwrap();
        assert!(!sg.edges.contains(&query));
        // The only path to n1/n2 went through the excluded edge.
        assert_eq!(sg.nodes, vec![eid(0)]);
    }

    #[test]
    fn serialization_is_byte_stable() {
        let kg = kg_from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let idx = build_index(&kg);
        let a = extract_khop(&idx, &[eid(1)], 2, 16, None).unwrap();
        let b = extract_khop(&idx, &[eid(1)], 2, 16, None).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let parsed: Subgraph = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(parsed, a);
        // Wire format keys, in order.
        assert!(a.to_json().starts_with("{\"anchors\":"));
        for key in ["\"nodes\":", "\"edges\":", "\"hop_of\":"] {
            assert!(a.to_json().contains(key));
        }
    }

    #[test]
    fn local_subgraph_from_string_triples() {
        let triples = vec![
            ("a".to_string(), "r".to_string(), "b".to_string()),
            ("a".to_string(), "r".to_string(), "b".to_string()),
        ];
        let sg = subgraph_from_triples(&triples).unwrap();
        assert_eq!(sg.node_count(), 2);
        assert_eq!(sg.edges.len(), 1, "duplicates are dropped");
        assert!(sg.anchors.is_empty());
        let local = sg.local.as_ref().unwrap();
        assert_eq!(local.entity_surfaces, vec!["a", "b"]);
        assert_eq!(local.relation_surfaces, vec!["r"]);
    }

    #[test]
    fn empty_triple_list_is_an_error() {
        assert!(matches!(
            subgraph_from_triples(&[]),
            Err(GraphError::EmptyTripleList)
        ));
    }
}

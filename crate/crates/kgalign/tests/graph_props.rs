//! Property tests for adjacency indexing and k-hop extraction against the
//! testkit's independent set-relaxation BFS.

use std::collections::BTreeSet;

use kgalign::graph::{build_index, extract_khop};
use kgalign::kg::{EntityId, KgBuilder, KnowledgeGraph};
use kgalign_testkit::{bfs_hops_oracle, bfs_nodes_oracle};
use proptest::prelude::*;

fn kg_from_edges(n: usize, edges: &[(usize, usize)]) -> KnowledgeGraph {
    let mut b = KgBuilder::new();
    for i in 0..n {
        b.entity(&format!("n{i:04}"));
    }
    let r = b.relation("r");
    for &(h, t) in edges {
        b.triple(EntityId(h as u32), r, EntityId(t as u32));
    }
    b.build()
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (3usize..24).prop_flat_map(|n| {
        let edges = proptest::collection::vec((0..n, 0..n), 0..(n * 2));
        (Just(n), edges)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn khop_nodes_match_bfs_oracle((n, raw_edges) in arb_graph(), anchor in 0usize..24, k in 0usize..5) {
        let anchor = anchor % n;
        // The index drops nothing, but duplicate raw edges would trip the
        // duplicate-triple invariant; dedup as a loader would have.
        let edges: Vec<(usize, usize)> = raw_edges.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let kg = kg_from_edges(n, &edges);
        let index = build_index(&kg);
        let sg = extract_khop(&index, &[EntityId(anchor as u32)], k, usize::MAX, None).unwrap();

        let got: BTreeSet<usize> = sg.nodes.iter().map(|e| e.index()).collect();
        let want = bfs_nodes_oracle(n, &edges, &[anchor], k);
        prop_assert_eq!(&got, &want);

        // Hop labels agree with oracle distances.
        let hops = bfs_hops_oracle(n, &edges, &[anchor], k);
        for (node, hop) in sg.nodes.iter().zip(&sg.hop_of) {
            prop_assert_eq!(hops[node.index()], Some(*hop));
        }

        // Edge closure: every indexed edge with both endpoints inside is
        // present, and nothing else.
        for t in kg.triples.iter() {
            let inside = got.contains(&t.head.index()) && got.contains(&t.tail.index());
            prop_assert_eq!(sg.edges.contains(t), inside);
        }
    }

    #[test]
    fn khop_is_monotone_in_k((n, edges) in arb_graph(), anchor in 0usize..24) {
        let anchor = anchor % n;
        let edges: Vec<(usize, usize)> = edges.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let kg = kg_from_edges(n, &edges);
        let index = build_index(&kg);
        let mut prev: BTreeSet<u32> = BTreeSet::new();
        for k in 0..5 {
            let sg = extract_khop(&index, &[EntityId(anchor as u32)], k, usize::MAX, None).unwrap();
            let now: BTreeSet<u32> = sg.nodes.iter().map(|e| e.0).collect();
            prop_assert!(prev.is_subset(&now), "k={k} shrank the node set");
            prev = now;
        }
    }

    #[test]
    fn degree_sum_is_twice_edges_minus_self_loops((n, edges) in arb_graph()) {
        let edges: Vec<(usize, usize)> = edges.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let kg = kg_from_edges(n, &edges);
        let index = build_index(&kg);
        let degree_sum: usize = (0..n).map(|i| index.degree(EntityId(i as u32))).sum();
        let self_loops = edges.iter().filter(|(h, t)| h == t).count();
        prop_assert_eq!(degree_sum, 2 * edges.len() - self_loops);
    }

    #[test]
    fn exclusion_removes_the_edge_everywhere((n, edges) in arb_graph(), anchor in 0usize..24, k in 1usize..4) {
        let anchor = anchor % n;
        let edges: Vec<(usize, usize)> = edges.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        prop_assume!(!edges.is_empty());
        let kg = kg_from_edges(n, &edges);
        let index = build_index(&kg);
        for query in kg.triples.iter().take(4) {
            let sg = extract_khop(&index, &[EntityId(anchor as u32)], k, usize::MAX, Some(*query)).unwrap();
            prop_assert!(!sg.edges.contains(query));
        }
    }
}

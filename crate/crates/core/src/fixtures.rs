//! Small fixed instances used by the self-check command and the tests.

use crate::construction::build_hyperedges;
use crate::graph::{BipartiteGraph, CategoryMap, HeteroHypergraph, Hyperedge};

/// Three users, five items, two categories:
/// u0 {i0, i1}, u1 {i1, i2}, u2 {i3, i4}; i0, i1 in c0 and i2, i3, i4 in c1.
pub fn small_interactions() -> (BipartiteGraph, CategoryMap) {
    let g = BipartiteGraph::from_edges(3, 5, [(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (2, 4)]).expect("valid edges");
    let cm = CategoryMap::new(2, vec![0, 0, 1, 1, 1]).expect("valid categories");
    (g, cm)
}

pub fn small_hypergraph() -> HeteroHypergraph {
    let (g, cm) = small_interactions();
    build_hyperedges(&g, &cm).expect("every item has a category")
}

/// Hyperedges the small instance must produce, in order.
pub fn small_expected_hyperedges() -> Vec<Hyperedge> {
    [(0, vec![0, 1], 0), (1, vec![1], 0), (1, vec![2], 1), (2, vec![3, 4], 1)]
        .into_iter()
        .map(|(u, items, c)| Hyperedge::new(u, items, c).expect("nonempty"))
        .collect()
}

/// Hyperedges completion adds to the small instance with two clusters and
/// every user sampled.
pub fn small_expected_completion() -> Vec<Hyperedge> {
    [(0, vec![2], 1), (1, vec![0, 1], 0)]
        .into_iter()
        .map(|(u, items, c)| Hyperedge::new(u, items, c).expect("nonempty"))
        .collect()
}

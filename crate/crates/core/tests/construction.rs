mod common;

use std::collections::{BTreeMap, BTreeSet};

use hgrec::construction::{build_hyperedges, reconstruct_interactions};
use hgrec::{BipartiteGraph, CategoryMap, Error};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (BipartiteGraph, CategoryMap)> {
    any::<u64>().prop_map(|seed| common::random_interactions(&mut common::rng(seed), 12, 16, 5, 0.3))
}

proptest! {
    #[test]
    fn existence_iff_interaction((g, cm) in instance()) {
        let hh = build_hyperedges(&g, &cm).unwrap();
        let keys: BTreeSet<(usize, usize)> = hh.hyperedges().iter().map(|h| (h.user, h.category)).collect();
        for u in 0..g.n_users() {
            for c in 0..cm.n_categories() {
                let interacted = g.edges().iter().any(|&(uu, i)| uu == u && cm.category(i) == c);
                prop_assert_eq!(keys.contains(&(u, c)), interacted);
            }
        }
    }

    #[test]
    fn count_bound_and_reconstruction((g, cm) in instance()) {
        let hh = build_hyperedges(&g, &cm).unwrap();
        prop_assert!(hh.n_hyperedges() <= g.edges().len());
        let edges: BTreeSet<_> = g.edges().iter().copied().collect();
        prop_assert_eq!(reconstruct_interactions(&hh), edges);
    }

    #[test]
    fn item_sets_match_grouping((g, cm) in instance()) {
        let hh = build_hyperedges(&g, &cm).unwrap();
        let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for &(u, i) in g.edges() {
            groups.entry((u, cm.category(i))).or_default().push(i);
        }
        let got: Vec<((usize, usize), Vec<usize>)> =
            hh.hyperedges().iter().map(|h| ((h.user, h.category), h.items.clone())).collect();
        let want: Vec<((usize, usize), Vec<usize>)> = groups.into_iter().collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn degree_identities((g, cm) in instance()) {
        let hh = build_hyperedges(&g, &cm).unwrap();
        let vertex_total: usize = (0..hh.n_vertices()).map(|v| hh.vertex_degree(v)).sum();
        let edge_total: usize = (0..hh.n_hyperedges()).map(|e| hh.edge_degree(e)).sum();
        prop_assert_eq!(vertex_total, edge_total);
        prop_assert_eq!(edge_total, hh.incidence_count());
        let l = hh.layout();
        for i in 0..g.n_items() {
            let users = g.edges().iter().filter(|e| e.1 == i).count();
            prop_assert_eq!(hh.vertex_degree(l.item(i)), users);
        }
        for e in 0..hh.n_hyperedges() {
            prop_assert_eq!(hh.edge_degree(e), hh.hyperedge(e).items.len() + 2);
        }
    }
}

#[test]
fn dense_incidence_agrees_with_index() {
    let mut r = common::rng(5);
    for _ in 0..30 {
        let hh = common::random_hypergraph(&mut r, 10, 12, 4);
        let all: Vec<usize> = (0..hh.n_hyperedges()).collect();
        let h = common::dense_incidence(&hh, &all);
        for v in 0..hh.n_vertices() {
            let from_dense: Vec<usize> = (0..all.len()).filter(|&e| h[[v, e]] == 1.0).collect();
            assert_eq!(hh.incident(v), from_dense.as_slice());
        }
    }
}

#[test]
fn missing_category_is_reported() {
    let g = BipartiteGraph::from_edges(1, 2, [(0, 0), (0, 1)]).unwrap();
    assert!(CategoryMap::multi(1, vec![vec![0], vec![]]).is_err());
    let cm = CategoryMap::new(1, vec![0, 0]).unwrap();
    assert!(build_hyperedges(&g, &cm).is_ok());
    let short = CategoryMap::new(1, vec![0]).unwrap();
    assert!(matches!(build_hyperedges(&g, &short), Err(Error::MissingCategory(_))));
}

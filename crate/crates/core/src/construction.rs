//! Hyperedge construction from interactions and the category map.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, CategoryMap, HeteroHypergraph, Hyperedge, VertexLayout};

/// Builds one hyperedge `(u, I_uc, c)` for every user/category pair whose
/// item set `I_uc` is nonempty. Hyperedges are ordered by (user, category).
pub fn build_hyperedges(g: &BipartiteGraph, cm: &CategoryMap) -> Result<HeteroHypergraph> {
    if cm.n_items() < g.n_items() {
        return Err(Error::MissingCategory(cm.n_items().to_string()));
    }
    let mut hyperedges = Vec::new();
    for u in 0..g.n_users() {
        let mut by_category: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in g.items_of(u) {
            for &c in cm.categories_of(i) {
                by_category.entry(c).or_default().push(i);
            }
        }
        for (c, items) in by_category {
            // items arrive ascending from the adjacency list
            hyperedges.push(Hyperedge { user: u, items, category: c });
        }
    }
    let layout = VertexLayout::new(g.n_users(), g.n_items(), cm.n_categories());
    HeteroHypergraph::new(layout, hyperedges)
}

/// Union of `(user, item)` pairs over all hyperedges.
pub fn reconstruct_interactions(hh: &HeteroHypergraph) -> BTreeSet<(usize, usize)> {
    hh.hyperedges()
        .iter()
        .flat_map(|h| h.items.iter().map(move |&i| (h.user, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example() -> (BipartiteGraph, CategoryMap) {
        let g = BipartiteGraph::from_edges(3, 5, [(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (2, 4)]).unwrap();
        let cm = CategoryMap::new(2, vec![0, 0, 1, 1, 1]).unwrap();
        (g, cm)
    }

    #[test]
    fn worked_example_hyperedges() {
        let (g, cm) = worked_example();
        let hh = build_hyperedges(&g, &cm).unwrap();
        let expected = vec![
            Hyperedge::new(0, [0, 1], 0).unwrap(),
            Hyperedge::new(1, [1], 0).unwrap(),
            Hyperedge::new(1, [2], 1).unwrap(),
            Hyperedge::new(2, [3, 4], 1).unwrap(),
        ];
        assert_eq!(hh.hyperedges(), expected.as_slice());
        assert!(hh.n_hyperedges() <= g.n_users() * cm.n_categories());
    }

    #[test]
    fn one_user_one_category() {
        let g = BipartiteGraph::from_edges(1, 4, [(0, 3), (0, 1), (0, 0)]).unwrap();
        let cm = CategoryMap::new(1, vec![0; 4]).unwrap();
        let hh = build_hyperedges(&g, &cm).unwrap();
        assert_eq!(hh.hyperedges(), &[Hyperedge::new(0, [0, 1, 3], 0).unwrap()]);
    }

    #[test]
    fn uncategorized_item_is_an_error() {
        let g = BipartiteGraph::from_edges(1, 3, [(0, 2)]).unwrap();
        let cm = CategoryMap::new(1, vec![0, 0]).unwrap();
        assert!(matches!(build_hyperedges(&g, &cm), Err(Error::MissingCategory(_))));
    }

    #[test]
    fn reconstruction_of_worked_example() {
        let (g, cm) = worked_example();
        let hh = build_hyperedges(&g, &cm).unwrap();
        let back: Vec<_> = reconstruct_interactions(&hh).into_iter().collect();
        assert_eq!(back, g.edges());
    }

    #[test]
    fn reconstruction_of_empty_graph() {
        let hh = HeteroHypergraph::new(VertexLayout::new(1, 1, 1), vec![]).unwrap();
        assert!(reconstruct_interactions(&hh).is_empty());
    }

    #[test]
    fn multi_category_item_joins_each_category() {
        let g = BipartiteGraph::from_edges(1, 2, [(0, 0), (0, 1)]).unwrap();
        let cm = CategoryMap::multi(2, vec![vec![0, 1], vec![1]]).unwrap();
        let hh = build_hyperedges(&g, &cm).unwrap();
        assert_eq!(
            hh.hyperedges(),
            &[Hyperedge::new(0, [0], 0).unwrap(), Hyperedge::new(0, [0, 1], 1).unwrap()]
        );
    }
}

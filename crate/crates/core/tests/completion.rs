mod common;

use std::collections::{BTreeMap, BTreeSet};

use hgrec::completion::{
    aggregate_cluster_items, build_feature_matrix, complete_hyperedges, kmeans, kmeans_with, Clustering,
    KMeansConfig,
};
use hgrec::construction::build_hyperedges;
use hgrec::pipeline::{generate_synthetic, SyntheticConfig};
use hgrec::{BipartiteGraph, CategoryMap, HeteroHypergraph, Hyperedge};
use ndarray::Array2;
use rand::Rng;

fn random_clustering(hh: &HeteroHypergraph, k: usize, seed: u64) -> Clustering {
    let f = build_feature_matrix(hh, None).unwrap();
    kmeans(&f, k.min(hh.layout().n_users), seed).unwrap()
}

#[test]
fn feature_matrix_matches_scan_oracle() {
    let mut r = common::rng(1);
    for _ in 0..40 {
        let hh = common::random_hypergraph(&mut r, 12, 15, 4);
        let f = build_feature_matrix(&hh, None).unwrap();
        let l = hh.layout();
        let mut m = Array2::<f64>::zeros((l.n_users, l.n_items));
        for h in hh.hyperedges() {
            for &i in &h.items {
                m[[h.user, i]] = 1.0;
            }
        }
        assert_eq!(f.data, m);
        assert_eq!(f.aux_width, 0);
    }
}

#[test]
fn aux_rows_must_match_users() {
    let hh = hgrec::fixtures::small_hypergraph();
    assert!(build_feature_matrix(&hh, Some(&Array2::zeros((2, 1)))).is_err());
    let f = build_feature_matrix(&hh, Some(&Array2::ones((3, 2)))).unwrap();
    assert_eq!(f.data.ncols(), 2 + 5);
}

#[test]
fn aggregation_matches_union_oracle() {
    let mut r = common::rng(2);
    for seed in 0..40 {
        let hh = common::random_hypergraph(&mut r, 12, 15, 4);
        let cl = random_clustering(&hh, 3, seed);
        let table = aggregate_cluster_items(&hh, &cl).unwrap();
        let mut want: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for u in 0..hh.layout().n_users {
            for h in hh.hyperedges().iter().filter(|h| h.user == u) {
                want.entry((cl.assignment[u], h.category)).or_default().extend(h.items.iter().copied());
            }
        }
        let got: BTreeMap<(usize, usize), BTreeSet<usize>> =
            table.entries.iter().map(|(k, v)| (*k, v.iter().copied().collect())).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn singleton_clusters_reproduce_own_rows() {
    let hh = hgrec::fixtures::small_hypergraph();
    let cl = random_clustering(&hh, 3, 0);
    let c = complete_hyperedges(&hh, &cl, 1.0, 4).unwrap();
    assert!(c.added.is_empty());
    assert_eq!(c.graph.hyperedges(), hh.hyperedges());
}

#[test]
fn property3_over_seeds() {
    let mut r = common::rng(3);
    let mut hh = common::random_hypergraph(&mut r, 30, 40, 4);
    while hh.layout().n_users < 30 {
        hh = common::random_hypergraph(&mut r, 30, 40, 4);
    }
    let n_users = hh.layout().n_users;
    let n_cat = hh.layout().n_categories;
    let cl = random_clustering(&hh, 5, 0);
    let table = aggregate_cluster_items(&hh, &cl).unwrap();
    let original: BTreeSet<&Hyperedge> = hh.hyperedges().iter().collect();
    for seed in 0..100 {
        let c = complete_hyperedges(&hh, &cl, 0.5, seed).unwrap();
        // monotone and preserved verbatim, in order
        assert_eq!(&c.graph.hyperedges()[..hh.n_hyperedges()], hh.hyperedges());
        assert_eq!(c.sampled_users.len(), (0.5 * n_users as f64).floor() as usize);
        let gain = c.graph.n_hyperedges() - hh.n_hyperedges();
        assert!(gain <= c.sampled_users.len() * n_cat);
        assert_eq!(gain, c.added.len());
        for a in &c.added {
            let h = c.graph.hyperedge(a.edge);
            assert!(c.sampled_users.contains(&h.user));
            assert!(!original.contains(h));
            assert_eq!(a.cluster, cl.assignment[h.user]);
            // conservatism: the added set is exactly the cluster union
            assert_eq!(table.get(a.cluster, h.category).unwrap(), h.items.as_slice());
        }
        assert_eq!(c, complete_hyperedges(&hh, &cl, 0.5, seed).unwrap());
    }
}

#[test]
fn property3_tight_when_every_candidate_is_novel() {
    // one cluster of two users, each touching a different item in both
    // categories: every (sampled user, category) yields a new hyperedge
    let g = BipartiteGraph::from_edges(2, 4, [(0, 0), (0, 2), (1, 1), (1, 3)]).unwrap();
    let cm = CategoryMap::new(2, vec![0, 0, 1, 1]).unwrap();
    let hh = build_hyperedges(&g, &cm).unwrap();
    let cl = Clustering { k: 1, assignment: vec![0, 0], centroids: Array2::zeros((1, 4)), inertia: 0.0 };
    let c = complete_hyperedges(&hh, &cl, 1.0, 0).unwrap();
    assert_eq!(c.added.len(), 2 * 2);

    // violating novelty: a user who already holds the cluster union adds less
    let g = BipartiteGraph::from_edges(2, 4, [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 3)]).unwrap();
    let hh = build_hyperedges(&g, &cm).unwrap();
    let c = complete_hyperedges(&hh, &cl, 1.0, 0).unwrap();
    assert!(c.added.len() < 2 * 2);
}

#[test]
fn kmeans_is_single_move_optimal() {
    let mut r = common::rng(4);
    for seed in 0..25 {
        let n = r.random_range(4..30);
        let d = r.random_range(1..6);
        let x = Array2::from_shape_fn((n, d), |_| r.random_range(0..3) as f64);
        let k = r.random_range(1..=n.min(5));
        let cl = kmeans_with(&x, k, seed, KMeansConfig::default()).unwrap();
        assert!(cl.sizes().iter().all(|&s| s > 0));
        let base = common::wcss(&x, &cl.assignment, k);
        assert!((base - cl.inertia).abs() < 1e-9 * base.max(1.0));
        for p in 0..n {
            if cl.sizes()[cl.assignment[p]] == 1 {
                continue;
            }
            for target in 0..k {
                let mut moved = cl.assignment.clone();
                moved[p] = target;
                assert!(common::wcss(&x, &moved, k) >= base - 1e-9, "moving {p} to {target} improves");
            }
        }
    }
}

#[test]
fn kmeans_recovers_separated_blobs_near_best_restart() {
    let mut r = common::rng(5);
    let centers = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 10.0]];
    let truth: Vec<usize> = (0..60).map(|p| p % 3).collect();
    let x = Array2::from_shape_fn((60, 3), |(p, j)| centers[truth[p]][j] + r.random_range(-1.0..1.0));
    let cl = kmeans_with(&x, 3, 9, KMeansConfig::default()).unwrap();
    assert!((common::adjusted_rand_index(&truth, &cl.assignment) - 1.0).abs() < 1e-12);

    // oracle: naive Lloyd from random distinct starting points, best of 200
    let mut best = f64::INFINITY;
    for _ in 0..200 {
        let mut starts: Vec<usize> = Vec::new();
        while starts.len() < 3 {
            let s = r.random_range(0..60);
            if !starts.contains(&s) {
                starts.push(s);
            }
        }
        let mut cent: Vec<[f64; 3]> = starts.iter().map(|&s| [x[[s, 0]], x[[s, 1]], x[[s, 2]]]).collect();
        let mut assign = vec![0; 60];
        for _ in 0..100 {
            for p in 0..60 {
                let dist = |c: &[f64; 3]| (0..3).map(|j| (x[[p, j]] - c[j]).powi(2)).sum::<f64>();
                assign[p] = (0..3).min_by(|&a, &b| dist(&cent[a]).total_cmp(&dist(&cent[b]))).unwrap();
            }
            for (c, slot) in cent.iter_mut().enumerate() {
                let rows: Vec<usize> = (0..60).filter(|&p| assign[p] == c).collect();
                if !rows.is_empty() {
                    for j in 0..3 {
                        slot[j] = rows.iter().map(|&p| x[[p, j]]).sum::<f64>() / rows.len() as f64;
                    }
                }
            }
        }
        best = best.min(common::wcss(&x, &assign, 3));
    }
    assert!(cl.inertia <= best * 1.01, "inertia {} vs best restart {best}", cl.inertia);
}

#[test]
fn kmeans_rejects_bad_k_and_is_deterministic() {
    let x = Array2::from_shape_fn((5, 2), |(p, j)| (p * 3 + j) as f64);
    assert!(kmeans_with(&x, 6, 0, KMeansConfig::default()).is_err());
    assert!(kmeans_with(&x, 0, 0, KMeansConfig::default()).is_err());
    let a = kmeans_with(&x, 2, 7, KMeansConfig::default()).unwrap();
    assert_eq!(a, kmeans_with(&x, 2, 7, KMeansConfig::default()).unwrap());
    let singletons = kmeans_with(&x, 5, 1, KMeansConfig::default()).unwrap();
    assert_eq!(singletons.inertia, 0.0);
}

#[test]
fn planted_partition_recovered_from_synthetic_features() {
    let cfg = SyntheticConfig {
        n_users: 90,
        n_items: 120,
        n_categories: 6,
        n_clusters: 3,
        density: 0.1,
        concentration: 0.95,
        seed: 1,
    };
    let data = generate_synthetic(&cfg).unwrap();
    let ds = hgrec::pipeline::Dataset::from_records(&data.records, &data.categories, false).unwrap();
    let hh = build_hyperedges(&ds.full, &ds.categories).unwrap();
    // user ordinals follow first appearance, which is u0, u1, ... here
    let labels: Vec<usize> =
        (0..cfg.n_users).map(|u| data.labels[ds.ids.users.external(u)[1..].parse::<usize>().unwrap()]).collect();
    let cl = random_clustering(&hh, 3, 0);
    let ari = common::adjusted_rand_index(&labels, &cl.assignment);
    assert!(ari >= 0.9, "adjusted Rand index {ari}");
}

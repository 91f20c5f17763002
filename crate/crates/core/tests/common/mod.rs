#![allow(dead_code)]

use hgrec::construction::build_hyperedges;
use hgrec::model::ModelParams;
use hgrec::{BipartiteGraph, CategoryMap, HeteroHypergraph};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random interactions where every category holds at least one item.
pub fn random_interactions(
    r: &mut ChaCha8Rng,
    max_users: usize,
    max_items: usize,
    max_categories: usize,
    density: f64,
) -> (BipartiteGraph, CategoryMap) {
    let nu = r.random_range(1..=max_users);
    let ni = r.random_range(1..=max_items);
    let nc = r.random_range(1..=max_categories).min(ni);
    let mut edges = Vec::new();
    for u in 0..nu {
        for i in 0..ni {
            if r.random::<f64>() < density {
                edges.push((u, i));
            }
        }
    }
    let cats: Vec<usize> = (0..ni).map(|i| if i < nc { i } else { r.random_range(0..nc) }).collect();
    (BipartiteGraph::from_edges(nu, ni, edges).unwrap(), CategoryMap::new(nc, cats).unwrap())
}

pub fn random_hypergraph(r: &mut ChaCha8Rng, max_users: usize, max_items: usize, max_categories: usize) -> HeteroHypergraph {
    loop {
        let (g, cm) = random_interactions(r, max_users, max_items, max_categories, 0.3);
        if !g.edges().is_empty() {
            return build_hyperedges(&g, &cm).unwrap();
        }
    }
}

/// |V| x |E| 0/1 incidence matrix built by scanning hyperedge members.
pub fn dense_incidence(hh: &HeteroHypergraph, edges: &[usize]) -> Array2<f64> {
    let mut h = Array2::zeros((hh.n_vertices(), edges.len()));
    for (col, &e) in edges.iter().enumerate() {
        let he = hh.hyperedge(e);
        let l = hh.layout();
        h[[l.user(he.user), col]] = 1.0;
        h[[l.category(he.category), col]] = 1.0;
        for &i in &he.items {
            h[[l.item(i), col]] = 1.0;
        }
    }
    h
}

pub fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|x| x.max(0.0))
}

/// Dense reference for one view: repeated ReLU(X Wn + H ReLU(Hᵀ X We)).
pub fn dense_encode(h: &Array2<f64>, p: &ModelParams) -> Array2<f64> {
    let mut x = p.embeddings.clone();
    for layer in &p.layers {
        let b = relu(&h.t().dot(&x).dot(&layer.w_edge));
        x = relu(&(x.dot(&layer.w_node) + h.dot(&b)));
    }
    x
}

/// Per-vertex loop reference for the fusion step. Returns (alpha, out).
pub fn loop_fuse(zs: &[Array2<f64>], p: &ModelParams) -> (Array2<f64>, Array2<f64>) {
    let (n, d) = zs[0].dim();
    let m = zs.len();
    let mut alpha = Array2::zeros((m, n));
    let mut fused = Array2::<f64>::zeros((n, d));
    let queries: Vec<Array1<f64>> = zs
        .iter()
        .map(|z| {
            let mut q = Array1::zeros(d);
            for v in 0..n {
                for j in 0..d {
                    q[j] += z[[v, j]];
                }
            }
            q / n as f64
        })
        .collect();
    for v in 0..n {
        let mut s = vec![0.0; m];
        for i in 0..m {
            let mut acc = p.b_att;
            for j in 0..d {
                acc += p.w_att[j] * queries[i][j] + p.w_att[d + j] * zs[i][[v, j]];
            }
            s[i] = acc;
        }
        let top = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = s.iter().map(|x| (x - top).exp()).sum();
        for i in 0..m {
            alpha[[i, v]] = (s[i] - top).exp() / total;
            for j in 0..d {
                fused[[v, j]] += alpha[[i, v]] * zs[i][[v, j]];
            }
        }
    }
    let mut out = Array2::zeros((n, d));
    for v in 0..n {
        for r in 0..d {
            let mut acc = p.b_out[r];
            for c in 0..d {
                acc += p.w_out[[r, c]] * fused[[v, c]];
            }
            out[[v, r]] = acc;
        }
    }
    (alpha, out)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
    let sum_cells: f64 = table.iter().flatten().map(|&n| c2(n)).sum();
    let sum_rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = sum_rows * sum_cols / c2(a.len() as u64);
    let max = (sum_rows + sum_cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (sum_cells - expected) / (max - expected)
}

/// Within-cluster sum of squares computed from scratch.
pub fn wcss(x: &Array2<f64>, assignment: &[usize], k: usize) -> f64 {
    let d = x.ncols();
    let mut total = 0.0;
    for c in 0..k {
        let rows: Vec<usize> = (0..x.nrows()).filter(|&p| assignment[p] == c).collect();
        if rows.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; d];
        for &p in &rows {
            for j in 0..d {
                mean[j] += x[[p, j]];
            }
        }
        for m in &mut mean {
            *m /= rows.len() as f64;
        }
        for &p in &rows {
            for j in 0..d {
                total += (x[[p, j]] - mean[j]).powi(2);
            }
        }
    }
    total
}

//! Behavioral profiling and hyperedge completion.
//!
//! Users are described by `[aux || interaction row]`, grouped with k-means,
//! and sampled users receive one hyperedge per category carrying the union of
//! their cluster's items in that category.

use std::collections::{BTreeMap, HashSet};

use ndarray::{s, Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroHypergraph, Hyperedge};

/// Per-user feature rows: auxiliary columns first, then the 0/1 item block.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFeatureMatrix {
    pub data: Array2<f64>,
    pub aux_width: usize,
}

impl UserFeatureMatrix {
    pub fn n_users(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    /// Standardizes each auxiliary column to zero mean and unit variance.
    /// Constant columns are centered only. The interaction block is untouched.
    pub fn standardize_aux(&mut self) {
        let n = self.data.nrows() as f64;
        for j in 0..self.aux_width {
            let mut col = self.data.column_mut(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            col.mapv_inplace(|x| if sd > 0.0 { (x - mean) / sd } else { x - mean });
        }
    }
}

/// Builds `F = [A || M]` where `M[p, q] = 1` iff user `p` appears with item
/// `q` in some hyperedge of `hh`.
pub fn build_feature_matrix(hh: &HeteroHypergraph, aux: Option<&Array2<f64>>) -> Result<UserFeatureMatrix> {
    let layout = hh.layout();
    let aux_width = aux.map_or(0, |a| a.ncols());
    if let Some(a) = aux {
        if a.nrows() != layout.n_users {
            return Err(Error::Shape(format!(
                "auxiliary matrix has {} rows, expected {}",
                a.nrows(),
                layout.n_users
            )));
        }
    }
    let mut data = Array2::zeros((layout.n_users, aux_width + layout.n_items));
    if let Some(a) = aux {
        data.slice_mut(s![.., ..aux_width]).assign(a);
    }
    for h in hh.hyperedges() {
        for &i in &h.items {
            data[[h.user, aux_width + i]] = 1.0;
        }
    }
    Ok(UserFeatureMatrix { data, aux_width })
}

/// Hard partition of users with its centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&p| self.assignment[p] == cluster).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iterations: usize,
    /// Stop once no centroid coordinate moves more than this.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { max_iterations: 100, tolerance: 1e-4 }
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means with distance-weighted seeding, Lloyd iterations and a final
/// single-point-move refinement.
pub fn kmeans(f: &UserFeatureMatrix, k: usize, seed: u64) -> Result<Clustering> {
    kmeans_with(&f.data, k, seed, KMeansConfig::default())
}

pub fn kmeans_with(x: &Array2<f64>, k: usize, seed: u64, cfg: KMeansConfig) -> Result<Clustering> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in [1, {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(x, k, &mut rng);
    let mut assignment = vec![0usize; n];

    for _ in 0..cfg.max_iterations {
        assign(x, &centroids, &mut assignment);
        repair_empty(x, &mut centroids, &mut assignment, k);
        let updated = means(x, &assignment, k, &centroids);
        let shift = (&updated - &centroids).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        centroids = updated;
        if shift < cfg.tolerance {
            break;
        }
    }
    assign(x, &centroids, &mut assignment);
    repair_empty(x, &mut centroids, &mut assignment, k);
    centroids = means(x, &assignment, k, &centroids);
    refine_single_moves(x, &mut assignment, &mut centroids, k);

    let inertia = (0..n).map(|p| sq_dist(x.row(p), centroids.row(assignment[p]))).sum();
    Ok(Clustering { k, assignment, centroids, inertia })
}

fn seed_centroids(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = (0..n).map(|p| sq_dist(x.row(p), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (p, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = p;
                    break;
                }
                target -= d;
            }
            // float round-off can land on a zero-weight tail
            if nearest[pick] == 0.0 {
                pick = nearest.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // all remaining points coincide with a chosen centroid
            (0..n).find(|p| !chosen.contains(p)).unwrap_or(0)
        };
        chosen.push(next);
        for p in 0..n {
            nearest[p] = nearest[p].min(sq_dist(x.row(p), x.row(next)));
        }
    }
    x.select(Axis(0), &chosen)
}

fn assign(x: &Array2<f64>, centroids: &Array2<f64>, assignment: &mut [usize]) {
    assignment.par_iter_mut().enumerate().for_each(|(p, a)| {
        let row = x.row(p);
        let mut best = (f64::INFINITY, 0);
        for (c, centroid) in centroids.outer_iter().enumerate() {
            let d = sq_dist(row, centroid);
            if d < best.0 {
                best = (d, c);
            }
        }
        *a = best.1;
    });
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(x: &Array2<f64>, centroids: &mut Array2<f64>, assignment: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let mut far = (f64::NEG_INFINITY, usize::MAX);
        for (p, &a) in assignment.iter().enumerate() {
            if sizes[a] < 2 {
                continue;
            }
            let d = sq_dist(x.row(p), centroids.row(a));
            if d > far.0 {
                far = (d, p);
            }
        }
        let p = far.1;
        assignment[p] = empty;
        centroids.row_mut(empty).assign(&x.row(p));
    }
}

fn means(x: &Array2<f64>, assignment: &[usize], k: usize, previous: &Array2<f64>) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (p, &a) in assignment.iter().enumerate() {
        let mut row = sums.row_mut(a);
        row += &x.row(p);
        counts[a] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            sums.row_mut(c).assign(&previous.row(c));
        } else {
            sums.row_mut(c).mapv_inplace(|v| v / count as f64);
        }
    }
    sums
}

/// Moves single points between clusters while any move lowers the
/// within-cluster sum of squares. Moving `x` from `a` to `b` changes the
/// objective by `n_b/(n_b+1)|x-mu_b|^2 - n_a/(n_a-1)|x-mu_a|^2`.
fn refine_single_moves(x: &Array2<f64>, assignment: &mut [usize], centroids: &mut Array2<f64>, k: usize) {
    let n = x.nrows();
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for _pass in 0..100 {
        let mut moved = false;
        for p in 0..n {
            let a = assignment[p];
            if sizes[a] < 2 {
                continue;
            }
            let row = x.row(p);
            let na = sizes[a] as f64;
            let removal = na / (na - 1.0) * sq_dist(row, centroids.row(a));
            let mut best = (0.0, a);
            for b in 0..k {
                if b == a {
                    continue;
                }
                let nb = sizes[b] as f64;
                let delta = nb / (nb + 1.0) * sq_dist(row, centroids.row(b)) - removal;
                // relative guard so round-off cannot cause cycling
                if delta < best.0 - 1e-12 * (1.0 + removal) {
                    best = (delta, b);
                }
            }
            let b = best.1;
            if b != a {
                let nb = sizes[b] as f64;
                let mut ca = centroids.row_mut(a);
                ca.zip_mut_with(&row, |m, &v| *m = (*m * na - v) / (na - 1.0));
                let mut cb = centroids.row_mut(b);
                cb.zip_mut_with(&row, |m, &v| *m = (*m * nb + v) / (nb + 1.0));
                sizes[a] -= 1;
                sizes[b] += 1;
                assignment[p] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    // recompute exactly to shed incremental round-off
    let fresh = means(x, assignment, k, centroids);
    *centroids = fresh;
}

/// Default cluster count: `round(sqrt(n_users))` clamped to `[2, n_users]`.
pub fn default_k(n_users: usize) -> usize {
    let k = (n_users as f64).sqrt().round() as usize;
    k.clamp(2.min(n_users), n_users.max(1))
}

/// Union of each cluster's items per category. Missing keys are empty sets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterItemTable {
    pub entries: BTreeMap<(usize, usize), Vec<usize>>,
}

impl ClusterItemTable {
    pub fn get(&self, cluster: usize, category: usize) -> Option<&[usize]> {
        self.entries.get(&(cluster, category)).map(Vec::as_slice)
    }
}

pub fn aggregate_cluster_items(hh: &HeteroHypergraph, cl: &Clustering) -> Result<ClusterItemTable> {
    if cl.assignment.len() != hh.layout().n_users {
        return Err(Error::Shape(format!(
            "clustering covers {} users, hypergraph has {}",
            cl.assignment.len(),
            hh.layout().n_users
        )));
    }
    let mut sets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for h in hh.hyperedges() {
        sets.entry((cl.assignment[h.user], h.category)).or_default().extend(&h.items);
    }
    for items in sets.values_mut() {
        items.sort_unstable();
        items.dedup();
    }
    Ok(ClusterItemTable { entries: sets })
}

/// Provenance of one hyperedge added by completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddedHyperedge {
    /// Index of the hyperedge in the completed graph.
    pub edge: usize,
    pub user: usize,
    pub cluster: usize,
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub graph: HeteroHypergraph,
    pub sampled_users: Vec<usize>,
    pub added: Vec<AddedHyperedge>,
}

/// Samples `max(1, floor(rho * |U|))` users without replacement and adds
/// `(u, I_{g(u),c}, c)` for every category with a nonempty cluster set,
/// skipping candidates identical to an existing hyperedge.
///
/// Original hyperedges keep their positions; additions follow in
/// (user, category) order.
pub fn complete_hyperedges(hh: &HeteroHypergraph, cl: &Clustering, rho: f64, seed: u64) -> Result<Completion> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument(format!("completion rate {rho} outside (0, 1]")));
    }
    let table = aggregate_cluster_items(hh, cl)?;
    let n_users = hh.layout().n_users;
    if n_users == 0 {
        return Ok(Completion { graph: hh.clone(), sampled_users: Vec::new(), added: Vec::new() });
    }
    let amount = ((rho * n_users as f64).floor() as usize).clamp(1, n_users);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled = index::sample(&mut rng, n_users, amount).into_vec();
    sampled.sort_unstable();

    let existing: HashSet<&Hyperedge> = hh.hyperedges().iter().collect();
    let mut extra = Vec::new();
    let mut added = Vec::new();
    for &u in &sampled {
        let k = cl.assignment[u];
        for c in 0..hh.layout().n_categories {
            let Some(items) = table.get(k, c) else { continue };
            let candidate = Hyperedge { user: u, items: items.to_vec(), category: c };
            if existing.contains(&candidate) {
                continue;
            }
            added.push(AddedHyperedge { edge: hh.n_hyperedges() + extra.len(), user: u, cluster: k, category: c });
            extra.push(candidate);
        }
    }
    let graph = hh.extended(extra)?;
    Ok(Completion { graph, sampled_users: sampled, added })
}

/// Settings for the full profiling-and-completion stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    /// Sampling rate in (0, 1]; 0 disables completion.
    pub rho: f64,
    /// Cluster count; `None` means [`default_k`].
    pub k_clusters: Option<usize>,
    pub seed: u64,
}

/// Runs feature construction, clustering and generation in sequence.
/// A zero rate returns the input graph untouched.
pub fn run_completion(
    hh: &HeteroHypergraph,
    aux: Option<&Array2<f64>>,
    cfg: &CompletionConfig,
) -> Result<(Completion, Option<Clustering>)> {
    if cfg.rho == 0.0 {
        return Ok((Completion { graph: hh.clone(), sampled_users: Vec::new(), added: Vec::new() }, None));
    }
    let features = build_feature_matrix(hh, aux)?;
    let k = cfg.k_clusters.unwrap_or_else(|| default_k(hh.layout().n_users));
    let clustering = kmeans(&features, k, cfg.seed)?;
    let completion = complete_hyperedges(hh, &clustering, cfg.rho, cfg.seed.wrapping_add(1))?;
    Ok((completion, Some(clustering)))
}

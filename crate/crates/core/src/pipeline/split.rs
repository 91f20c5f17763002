//! Seeded train/validation/test partition of interaction edges.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitBundle {
    pub train: Vec<(usize, usize)>,
    pub validation: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub seed: u64,
    /// Edges moved back to train by the repair pass.
    pub repaired: usize,
}

impl SplitBundle {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn graphs(&self, n_users: usize, n_items: usize) -> Result<[BipartiteGraph; 3]> {
        Ok([
            BipartiteGraph::from_edges(n_users, n_items, self.train.iter().copied())?,
            BipartiteGraph::from_edges(n_users, n_items, self.validation.iter().copied())?,
            BipartiteGraph::from_edges(n_users, n_items, self.test.iter().copied())?,
        ])
    }
}

/// Target sizes before repair.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> (usize, usize, usize) {
    let train = ((ratios[0] * n as f64).round() as usize).min(n);
    let val = ((ratios[1] * n as f64).round() as usize).min(n - train);
    (train, val, n - train - val)
}

/// Shuffles the edges with `seed`, cuts them by `ratios`, then moves one
/// held-out edge back to train for every user left without one.
pub fn split(edges: &[(usize, usize)], ratios: [f64; 3], seed: u64) -> Result<SplitBundle> {
    if ratios.iter().any(|&r| r <= 0.0 || !r.is_finite()) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must be positive and sum to 1, got {ratios:?}")));
    }
    let mut order: Vec<(usize, usize)> = edges.to_vec();
    order.sort_unstable();
    order.dedup();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (n_train, n_val, _) = split_sizes(order.len(), ratios);
    let mut train: Vec<(usize, usize)> = order[..n_train].to_vec();
    let mut val: Vec<(usize, usize)> = order[n_train..n_train + n_val].to_vec();
    let mut test: Vec<(usize, usize)> = order[n_train + n_val..].to_vec();

    let n_users = order.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let mut has_train = vec![false; n_users];
    for &(u, _) in &train {
        has_train[u] = true;
    }
    let mut repaired = 0;
    for held in [&mut val, &mut test] {
        let mut kept = Vec::with_capacity(held.len());
        for &(u, i) in held.iter() {
            if has_train[u] {
                kept.push((u, i));
            } else {
                has_train[u] = true;
                train.push((u, i));
                repaired += 1;
            }
        }
        *held = kept;
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitBundle { train, validation: val, test, seed, repaired })
}

//! Synthetic interaction logs with planted user clusters.
//!
//! Items are assigned to categories round-robin. Each cluster prefers up to
//! two categories and ranks the items inside them by its own random
//! popularity order, so clusters sharing a category still differ.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::InteractionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_categories: usize,
    pub n_clusters: usize,
    /// Expected fraction of the catalogue each user touches.
    pub density: f64,
    /// Probability that a draw comes from the cluster's preferred categories.
    pub concentration: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 200,
            n_items: 300,
            n_categories: 6,
            n_clusters: 4,
            density: 0.05,
            concentration: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub records: Vec<InteractionRecord>,
    /// `(item, category)` rows for every item in the catalogue.
    pub categories: Vec<(String, String)>,
    /// Planted cluster of each user ordinal.
    pub labels: Vec<usize>,
    pub preferred: Vec<Vec<usize>>,
    /// Users whose draw came out empty and were given one interaction.
    pub densified_users: usize,
    /// Items nobody drew, each given one interaction.
    pub densified_items: usize,
}

pub fn user_id(u: usize) -> String {
    format!("u{u}")
}

pub fn item_id(i: usize) -> String {
    format!("i{i}")
}

pub fn category_id(c: usize) -> String {
    format!("c{c}")
}

fn preferred_categories(k: usize, n_categories: usize) -> Vec<usize> {
    let per = n_categories.min(2);
    let mut v: Vec<usize> = (0..per).map(|j| (k * per + j) % n_categories).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Draws an index from cumulative weights.
fn pick(cumulative: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cumulative.last().expect("nonempty");
    let x = rng.random::<f64>() * total;
    cumulative.partition_point(|&c| c <= x).min(cumulative.len() - 1)
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    let SyntheticConfig { n_users, n_items, n_categories, n_clusters, density, concentration, seed } = *cfg;
    if n_users == 0 || n_items == 0 || n_categories == 0 || n_clusters == 0 {
        return Err(Error::InvalidArgument("all synthetic counts must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&density) || !(0.0..=1.0).contains(&concentration) {
        return Err(Error::InvalidArgument("density and concentration must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let category_of = |i: usize| i % n_categories;
    let by_category: Vec<Vec<usize>> =
        (0..n_categories).map(|c| (0..n_items).filter(|&i| category_of(i) == c).collect()).collect();

    let preferred: Vec<Vec<usize>> = (0..n_clusters)
        .map(|k| preferred_categories(k, n_categories).into_iter().filter(|&c| !by_category[c].is_empty()).collect())
        .collect();

    // popularity[k][c]: cluster k's item order in category c with cumulative weights
    let popularity: Vec<Vec<(Vec<usize>, Vec<f64>)>> = (0..n_clusters)
        .map(|_| {
            by_category
                .iter()
                .map(|items| {
                    let mut order = items.clone();
                    order.shuffle(&mut rng);
                    let cum = (0..order.len())
                        .scan(0.0, |acc, r| {
                            *acc += 1.0 / ((r + 1) as f64).powf(0.7);
                            Some(*acc)
                        })
                        .collect();
                    (order, cum)
                })
                .collect()
        })
        .collect();

    let mut labels: Vec<usize> = (0..n_users).map(|u| u % n_clusters).collect();
    labels.shuffle(&mut rng);

    let mean = density * n_items as f64;
    let mut chosen: Vec<BTreeSet<usize>> = Vec::with_capacity(n_users);
    let mut densified_users = 0;
    for &k in &labels {
        let lo = (0.5 * mean).round() as usize;
        let hi = ((1.5 * mean).round() as usize).min(n_items);
        let target = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let mut items = BTreeSet::new();
        let mut draws = 0;
        while items.len() < target && draws < 50 * target {
            draws += 1;
            let item = if !preferred[k].is_empty() && rng.random::<f64>() < concentration {
                let c = preferred[k][rng.random_range(0..preferred[k].len())];
                let (order, cum) = &popularity[k][c];
                order[pick(cum, &mut rng)]
            } else {
                rng.random_range(0..n_items)
            };
            items.insert(item);
        }
        if items.is_empty() {
            densified_users += 1;
            let c = preferred[k].first().copied().unwrap_or(category_of(0));
            items.insert(popularity[k][c].0[0]);
        }
        chosen.push(items);
    }

    let mut seen = vec![false; n_items];
    for items in &chosen {
        for &i in items {
            seen[i] = true;
        }
    }
    let mut densified_items = 0;
    for i in (0..n_items).filter(|&i| !seen[i]) {
        let fans: Vec<usize> =
            (0..n_users).filter(|&u| preferred[labels[u]].contains(&category_of(i))).collect();
        let u = if fans.is_empty() { rng.random_range(0..n_users) } else { fans[rng.random_range(0..fans.len())] };
        chosen[u].insert(i);
        densified_items += 1;
    }
    if densified_users + densified_items > 0 {
        log::info!("synthetic data densified: {densified_users} users, {densified_items} items");
    }

    let records = chosen
        .iter()
        .enumerate()
        .flat_map(|(u, items)| items.iter().map(move |&i| InteractionRecord::new(user_id(u), item_id(i))))
        .collect();
    let categories = (0..n_items).map(|i| (item_id(i), category_id(category_of(i)))).collect();
    Ok(SyntheticData { records, categories, labels, preferred, densified_users, densified_items })
}

impl SyntheticData {
    pub fn interactions_tsv(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            writeln!(s, "{}\t{}", r.user, r.item).unwrap();
        }
        s
    }

    pub fn categories_tsv(&self) -> String {
        let mut s = String::new();
        for (i, c) in &self.categories {
            writeln!(s, "{i}\t{c}").unwrap();
        }
        s
    }

    /// `user<TAB>cluster` ground truth.
    pub fn labels_tsv(&self) -> String {
        let mut s = String::new();
        for (u, k) in self.labels.iter().enumerate() {
            writeln!(s, "{}\t{k}", user_id(u)).unwrap();
        }
        s
    }
}

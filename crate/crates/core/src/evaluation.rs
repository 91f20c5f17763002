//! Top-K ranking and the ranking metrics P, R, nDCG, MRR and F1.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::model::{logit, sigmoid, ModelParams};

/// Recommended items for one user, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Scores every item not in `exclude` and keeps the best `k`, breaking ties
/// by ascending item index.
pub fn rank_items(user: usize, out: &Array2<f64>, p: &ModelParams, exclude: &[usize], k: usize) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    if user >= p.layout.n_users {
        return Err(Error::InvalidArgument(format!("user {user} outside the model layout")));
    }
    let excluded: HashSet<usize> = exclude.iter().copied().collect();
    let mut scored: Vec<(f64, usize)> = (0..p.layout.n_items)
        .filter(|i| !excluded.contains(i))
        .map(|i| (sigmoid(logit(out, p, user, i)), i))
        .collect();
    if scored.is_empty() {
        return Err(Error::Evaluation(format!("user {user} has no candidate items")));
    }
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, by_rank);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_rank);
    Ok(RankedList {
        user,
        items: scored.iter().map(|s| s.1).collect(),
        scores: scored.iter().map(|s| s.0).collect(),
    })
}

/// Ranks for each user, excluding that user's training positives.
pub fn rank_all(users: &[usize], out: &Array2<f64>, p: &ModelParams, train: &BipartiteGraph, k: usize) -> Result<Vec<RankedList>> {
    users
        .par_iter()
        .map(|&u| {
            let exclude = if u < train.n_users() { train.items_of(u) } else { &[] };
            rank_items(u, out, p, exclude, k)
        })
        .collect()
}

/// Denominator used for recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    /// Hits divided by the cutoff K.
    CutoffDenominator,
    /// Hits divided by the number of relevant items.
    TruthDenominator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub mrr: f64,
    /// Harmonic mean of the averaged precision and recall.
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: usize,
    pub k: usize,
    pub hits: usize,
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_k: Vec<MetricsAtK>,
    pub per_user: Vec<UserMetrics>,
    pub users_evaluated: usize,
    /// Ranked users skipped because they have no relevant items.
    pub users_without_truth: usize,
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

/// Metrics for one user at cutoff `k`. `relevant` must be sorted.
pub fn user_metrics(list: &RankedList, relevant: &[usize], k: usize, mode: RecallMode) -> UserMetrics {
    let top = &list.items[..k.min(list.items.len())];
    let mut hits = 0;
    let mut dcg = 0.0;
    let mut first_hit = None;
    for (pos, item) in top.iter().enumerate() {
        if relevant.binary_search(item).is_ok() {
            hits += 1;
            dcg += discount(pos + 1);
            first_hit.get_or_insert(pos + 1);
        }
    }
    let ideal: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    let precision = if top.is_empty() { 0.0 } else { hits as f64 / top.len() as f64 };
    let recall = match mode {
        RecallMode::CutoffDenominator => hits as f64 / k as f64,
        RecallMode::TruthDenominator => hits as f64 / relevant.len() as f64,
    };
    UserMetrics {
        user: list.user,
        k,
        hits,
        precision,
        recall,
        ndcg: if ideal > 0.0 { dcg / ideal } else { 0.0 },
        mrr: first_hit.map_or(0.0, |r| 1.0 / r as f64),
    }
}

/// Macro-averages every metric over users with at least one relevant item.
pub fn compute_metrics(lists: &[RankedList], truth: &BipartiteGraph, ks: &[usize], mode: RecallMode) -> Result<MetricsReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Evaluation("cutoffs must be a nonempty list of positive integers".into()));
    }
    let mut seen = HashSet::new();
    let mut evaluated = Vec::new();
    let mut without = 0;
    for list in lists {
        if !seen.insert(list.user) {
            return Err(Error::Evaluation(format!("user {} ranked twice", list.user)));
        }
        let relevant = if list.user < truth.n_users() { truth.items_of(list.user) } else { &[] };
        if relevant.is_empty() {
            without += 1;
        } else {
            evaluated.push((list, relevant));
        }
    }
    if evaluated.is_empty() {
        return Err(Error::Evaluation("no ranked user has relevant items".into()));
    }
    let n = evaluated.len() as f64;
    let mut per_k = Vec::with_capacity(ks.len());
    let mut per_user = Vec::with_capacity(ks.len() * evaluated.len());
    for &k in ks {
        let rows: Vec<UserMetrics> = evaluated.iter().map(|(l, r)| user_metrics(l, r, k, mode)).collect();
        let mean = |f: fn(&UserMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let precision = mean(|m| m.precision);
        let recall = mean(|m| m.recall);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        per_k.push(MetricsAtK { k, precision, recall, ndcg: mean(|m| m.ndcg), mrr: mean(|m| m.mrr), f1 });
        per_user.extend(rows);
    }
    Ok(MetricsReport { per_k, per_user, users_evaluated: evaluated.len(), users_without_truth: without })
}

impl MetricsReport {
    pub fn at(&self, k: usize) -> Option<&MetricsAtK> {
        self.per_k.iter().find(|m| m.k == k)
    }

    /// `K,metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("K,metric,value\n");
        for m in &self.per_k {
            for (name, v) in [("P", m.precision), ("R", m.recall), ("nDCG", m.ndcg), ("MRR", m.mrr), ("F1", m.f1)] {
                writeln!(s, "{},{name},{v}", m.k).unwrap();
            }
        }
        s
    }

    pub fn per_user_csv(&self) -> String {
        let mut s = String::from("user,K,hits,P,R,nDCG,MRR\n");
        for m in &self.per_user {
            writeln!(s, "{},{},{},{},{},{},{}", m.user, m.k, m.hits, m.precision, m.recall, m.ndcg, m.mrr).unwrap();
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "users evaluated: {} (skipped without relevant items: {})\n{:>4}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}\n",
            self.users_evaluated, self.users_without_truth, "K", "P", "R", "nDCG", "MRR", "F1"
        );
        for m in &self.per_k {
            writeln!(
                s,
                "{:>4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
                m.k, m.precision, m.recall, m.ndcg, m.mrr, m.f1
            )
            .unwrap();
        }
        s
    }
}

/// Expected nDCG@K of a uniformly random ranking of `candidates` items of
/// which `relevant` are relevant.
pub fn random_ranker_ndcg(candidates: usize, relevant: usize, k: usize) -> f64 {
    if candidates == 0 || relevant == 0 {
        return 0.0;
    }
    let hit = relevant.min(candidates) as f64 / candidates as f64;
    let dcg: f64 = (1..=k.min(candidates)).map(|p| hit * discount(p)).sum();
    let ideal: f64 = (1..=k.min(relevant)).map(discount).sum();
    dcg / ideal
}

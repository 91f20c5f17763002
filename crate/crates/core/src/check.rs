//! Fast self-checks run by the `check` command.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::completion::{run_completion, CompletionConfig};
use crate::construction::{build_hyperedges, reconstruct_interactions};
use crate::error::Result;
use crate::evaluation::{user_metrics, RankedList, RecallMode};
use crate::fixtures;
use crate::graph::{BipartiteGraph, CategoryMap, HeteroHypergraph};
use crate::model::{forward, ModelConfig, ModelParams, ViewIncidence};
use crate::sampling::{hyperedge_pick_distribution, node_pick_distribution, transition_distribution};
use crate::training::{bpr_loss, bpr_loss_and_grad, BprForm, Triplet};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult { name, passed: false, detail: format!("error: {e}") },
    }
}

fn check_construction() -> Result<(bool, String)> {
    let hh = fixtures::small_hypergraph();
    let ok = hh.hyperedges() == fixtures::small_expected_hyperedges().as_slice();
    Ok((ok, format!("{} hyperedges from 6 interactions", hh.n_hyperedges())))
}

fn check_completion() -> Result<(bool, String)> {
    let hh = fixtures::small_hypergraph();
    let (c, _) = run_completion(&hh, None, &CompletionConfig { rho: 1.0, k_clusters: Some(2), seed: 0 })?;
    let added: Vec<_> = c.added.iter().map(|a| c.graph.hyperedge(a.edge).clone()).collect();
    Ok((added == fixtures::small_expected_completion(), format!("{} hyperedges added", added.len())))
}

fn random_instance(rng: &mut ChaCha8Rng) -> Result<(BipartiteGraph, CategoryMap)> {
    let (nu, ni, nc) = (rng.random_range(1..=12), rng.random_range(1..=15), rng.random_range(1..=4));
    let mut edges = Vec::new();
    for u in 0..nu {
        for i in 0..ni {
            if rng.random::<f64>() < 0.25 {
                edges.push((u, i));
            }
        }
    }
    let cats = (0..ni).map(|i| if i < nc { i } else { rng.random_range(0..nc) }).collect();
    let nc = nc.min(ni);
    Ok((BipartiteGraph::from_edges(nu, ni, edges)?, CategoryMap::new(nc, cats)?))
}

fn check_construction_properties() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for _ in 0..50 {
        let (g, cm) = random_instance(&mut rng)?;
        let hh = build_hyperedges(&g, &cm)?;
        let expect: BTreeSet<(usize, usize)> = g.edges().iter().map(|&(u, i)| (u, cm.category(i))).collect();
        let got: BTreeSet<(usize, usize)> = hh.hyperedges().iter().map(|h| (h.user, h.category)).collect();
        violations += usize::from(expect != got);
        violations += usize::from(hh.n_hyperedges() > g.edges().len());
        violations += usize::from(reconstruct_interactions(&hh) != g.edges().iter().copied().collect());
    }
    Ok((violations == 0, format!("{violations} violations over 50 instances")))
}

fn check_walk_laws() -> Result<(bool, String)> {
    let hh = fixtures::small_hypergraph();
    let mut worst: f64 = 0.0;
    for v in hh.non_isolated() {
        let e = hyperedge_pick_distribution(&hh, v)?;
        worst = worst.max((e.iter().map(|x| x.1).sum::<f64>() - 1.0).abs());
        for &(edge, _) in &e {
            let n = node_pick_distribution(&hh, edge, v)?;
            worst = worst.max((n.iter().map(|x| x.1).sum::<f64>() - 1.0).abs());
        }
        let t = transition_distribution(&hh, v, v, 0.1)?;
        worst = worst.max((t.iter().sum::<f64>() - 1.0).abs());
    }
    Ok((worst < 1e-12, format!("max |sum - 1| = {worst:.2e}")))
}

fn check_metrics() -> Result<(bool, String)> {
    let list = RankedList { user: 0, items: (0..10).collect(), scores: (0..10).rev().map(f64::from).collect() };
    let m = user_metrics(&list, &[1], 10, RecallMode::CutoffDenominator);
    let ndcg = 1.0 / 3f64.log2();
    let ok = (m.mrr - 0.5).abs() < 1e-12 && (m.ndcg - ndcg).abs() < 1e-12;
    Ok((ok, format!("MRR@10 {:.4}, nDCG@10 {:.4}", m.mrr, m.ndcg)))
}

fn tiny_model() -> Result<(HeteroHypergraph, ModelParams, Vec<ViewIncidence>, Vec<Triplet>)> {
    let hh = fixtures::small_hypergraph();
    let p = ModelParams::init(hh.layout(), &ModelConfig { dim: 4, layers: 2, seed: 3 })?;
    let full = ViewIncidence::full(&hh);
    let half = ViewIncidence::from_members(hh.n_vertices(), (1..3).map(|e| hh.members(e).to_vec()).collect())?;
    let views = vec![full, half];
    let triplets = vec![
        Triplet { user: 0, pos: 1, neg: 3 },
        Triplet { user: 1, pos: 2, neg: 4 },
        Triplet { user: 2, pos: 4, neg: 0 },
    ];
    Ok((hh, p, views, triplets))
}

/// Largest per-tensor relative gap between analytic and central-difference
/// gradients.
pub fn gradient_gap(p: &ModelParams, views: &[ViewIncidence], triplets: &[Triplet], lambda: f64, step: f64) -> Result<f64> {
    let form = BprForm::SigmoidDifference;
    let cache = forward(p, views)?;
    let (_, grads) = bpr_loss_and_grad(p, views, &cache, triplets, lambda, form)?;
    let loss_at = |q: &ModelParams| -> Result<f64> { bpr_loss(q, forward(q, views)?.out(), triplets, lambda, form) };
    let mut worst: f64 = 0.0;
    let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
    for (t, (_, analytic)) in grads.tensors().into_iter().enumerate() {
        let mut gap: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for j in 0..analytic.len() {
            let mut q = p.clone();
            q.tensors_mut()[t].1[j] += step;
            let up = loss_at(&q)?;
            q.tensors_mut()[t].1[j] -= 2.0 * step;
            let down = loss_at(&q)?;
            let numeric = (up - down) / (2.0 * step);
            gap = gap.max((numeric - analytic[j]).abs());
            scale = scale.max(numeric.abs()).max(analytic[j].abs());
        }
        // the attention bias cancels in the softmax, so its gradient is zero
        let rel = gap / scale.max(1e-8);
        log::debug!("gradient {}: relative gap {rel:.3e}", names[t]);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn check_gradients() -> Result<(bool, String)> {
    let (_, p, views, triplets) = tiny_model()?;
    let gap = gradient_gap(&p, &views, &triplets, 1e-3, 1e-4)?;
    Ok((gap < 1e-4, format!("max relative gap {gap:.2e}")))
}

fn check_checkpoint() -> Result<(bool, String)> {
    let (_, p, _, _) = tiny_model()?;
    let (back, _) = checkpoint::from_text(&checkpoint::to_text(&p, "check"))?;
    Ok((back == p, format!("{} values", p.n_parameters())))
}

/// Runs every check in order.
pub fn run_checks() -> Vec<CheckResult> {
    vec![
        outcome("construction example", check_construction()),
        outcome("completion example", check_completion()),
        outcome("construction properties", check_construction_properties()),
        outcome("walk distributions", check_walk_laws()),
        outcome("metric hand case", check_metrics()),
        outcome("gradients", check_gradients()),
        outcome("checkpoint round trip", check_checkpoint()),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for r in super::run_checks() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}

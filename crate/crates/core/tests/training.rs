mod common;

use std::collections::BTreeSet;

use hgrec::check::gradient_gap;
use hgrec::construction::build_hyperedges;
use hgrec::model::{forward, ModelConfig, ModelParams, ViewIncidence};
use hgrec::sampling::{StartPolicy, WalkConfig};
use hgrec::training::{
    adam_step, backward, bpr_loss, bpr_loss_and_grad, sample_triplets, train, BprForm, OptimizerState, TrainConfig,
    TrainData, Triplet,
};
use hgrec::{BipartiteGraph, HeteroHypergraph};
use ndarray::Array2;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn views_of(hh: &HeteroHypergraph, r: &mut rand_chacha::ChaCha8Rng, m: usize) -> Vec<ViewIncidence> {
    let mut out = vec![ViewIncidence::full(hh)];
    while out.len() < m {
        let edges: Vec<Vec<usize>> = (0..hh.n_hyperedges())
            .filter(|_| r.random::<f64>() < 0.5)
            .map(|e| hh.members(e).to_vec())
            .collect();
        out.push(ViewIncidence::from_members(hh.n_vertices(), edges).unwrap());
    }
    out
}

fn random_triplets(r: &mut rand_chacha::ChaCha8Rng, g: &BipartiteGraph, n: usize) -> Vec<Triplet> {
    let edges = g.edges();
    (0..n)
        .map(|_| {
            let (u, pos) = edges[r.random_range(0..edges.len())];
            Triplet { user: u, pos, neg: r.random_range(0..g.n_items()) }
        })
        .collect()
}

#[test]
fn negatives_are_uniform_over_unseen_items() {
    // one user who has seen 5 of 25 items; 10^4 draws over the other 20
    let seen = [0usize, 3, 7, 8, 19];
    let full = BipartiteGraph::from_edges(1, 25, seen.iter().map(|&i| (0, i))).unwrap();
    let train = BipartiteGraph::from_edges(1, 25, [(0, 3)]).unwrap();
    let s = sample_triplets(&train, &full, 10_000, 0, 42);
    assert_eq!(s.triplets.len(), 10_000);
    let mut counts = vec![0f64; 25];
    for t in &s.triplets {
        assert!(!seen.contains(&t.neg));
        counts[t.neg] += 1.0;
    }
    let expected = 10_000.0 / 20.0;
    let stat: f64 = (0..25).filter(|i| !seen.contains(i)).map(|i| (counts[i] - expected).powi(2) / expected).sum();
    let p = ChiSquared::new(19.0).unwrap().sf(stat);
    assert!(p > 0.01, "chi-square {stat}, p = {p}");
}

#[test]
fn triplet_count_contract() {
    let mut r = common::rng(2);
    for seed in 0..30 {
        let (full, _) = common::random_interactions(&mut r, 8, 10, 3, 0.4);
        let kept: Vec<(usize, usize)> = full.edges().iter().copied().filter(|_| r.random::<f64>() < 0.7).collect();
        let train = BipartiteGraph::from_edges(full.n_users(), full.n_items(), kept.clone()).unwrap();
        let n_neg = r.random_range(1..4);
        let s = sample_triplets(&train, &full, n_neg, seed as usize, seed);
        let saturated = kept.iter().filter(|(u, _)| full.items_of(*u).len() == full.n_items()).count();
        assert_eq!(s.triplets.len() + s.skipped, kept.len() * n_neg);
        assert_eq!(s.skipped, saturated * n_neg);
        let positives: BTreeSet<(usize, usize)> = kept.iter().copied().collect();
        for t in &s.triplets {
            assert!(positives.contains(&(t.user, t.pos)));
            assert!(!full.items_of(t.user).contains(&t.neg));
        }
    }
}

fn tiny() -> (HeteroHypergraph, ModelParams) {
    let hh = hgrec::fixtures::small_hypergraph();
    let p = ModelParams::init(hh.layout(), &ModelConfig { dim: 3, layers: 1, seed: 5 }).unwrap();
    (hh, p)
}

#[test]
fn loss_hand_cases() {
    let (_, mut p) = tiny();
    let out = Array2::zeros((8, 3));
    let t = [Triplet { user: 0, pos: 0, neg: 1 }];
    for form in [BprForm::SigmoidDifference, BprForm::RawLogit] {
        assert!((bpr_loss(&p, &out, &t, 0.0, form).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }
    // a raw logit gap of ln 3 gives sigmoid 3/4
    p.item_bias[0] = 3f64.ln();
    assert!((bpr_loss(&p, &out, &t, 0.0, BprForm::RawLogit).unwrap() + 0.75f64.ln()).abs() < 1e-15);
}

#[test]
fn regularizer_oracle_and_strict_bound() {
    let mut r = common::rng(3);
    for seed in 0..10 {
        let (hh, _) = tiny();
        let p = ModelParams::init(hh.layout(), &ModelConfig { dim: 4, layers: 2, seed }).unwrap();
        let norm: f64 = p.tensors().iter().flat_map(|(_, t)| t.iter()).map(|x| x * x).sum();
        let views = views_of(&hh, &mut r, 2);
        let out = forward(&p, &views).unwrap().out().clone();
        let g = BipartiteGraph::from_edges(3, 5, hgrec::construction::reconstruct_interactions(&hh)).unwrap();
        let t = random_triplets(&mut r, &g, 6);
        let lambda = 0.01;
        for form in [BprForm::SigmoidDifference, BprForm::RawLogit] {
            let plain = bpr_loss(&p, &out, &t, 0.0, form).unwrap();
            let reg = bpr_loss(&p, &out, &t, lambda, form).unwrap();
            assert!((reg - plain - lambda * norm).abs() < 1e-12);
            assert!(plain > 0.0);
            assert!(reg > lambda * norm);
        }
    }
}

#[test]
fn regularizer_gradient_is_two_lambda_theta() {
    let mut r = common::rng(4);
    let (hh, p) = tiny();
    let views = views_of(&hh, &mut r, 3);
    let g = BipartiteGraph::from_edges(3, 5, hgrec::construction::reconstruct_interactions(&hh)).unwrap();
    let t = random_triplets(&mut r, &g, 5);
    for form in [BprForm::SigmoidDifference, BprForm::RawLogit] {
        let a = backward(&p, &views, &t, 0.0, form).unwrap();
        let b = backward(&p, &views, &t, 0.25, form).unwrap();
        for (((_, ga), (_, gb)), (_, theta)) in a.tensors().iter().zip(b.tensors()).zip(p.tensors()) {
            for j in 0..theta.len() {
                assert!((gb[j] - ga[j] - 0.5 * theta[j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = common::rng(5);
    let mut checked = 0;
    while checked < 6 {
        let hh = common::random_hypergraph(&mut r, 5, 6, 2);
        let g = BipartiteGraph::from_edges(
            hh.layout().n_users,
            hh.layout().n_items,
            hgrec::construction::reconstruct_interactions(&hh),
        )
        .unwrap();
        if g.edges().len() < 2 {
            continue;
        }
        let p = ModelParams::init(hh.layout(), &ModelConfig { dim: 3, layers: 2, seed: checked }).unwrap();
        let views = views_of(&hh, &mut r, 3);
        let t = random_triplets(&mut r, &g, 4);
        let gap = gradient_gap(&p, &views, &t, 1e-3, 1e-5).unwrap();
        assert!(gap < 1e-4, "relative gap {gap}");

        // raw-logit form against its own central differences
        let grads = backward(&p, &views, &t, 1e-3, BprForm::RawLogit).unwrap();
        let loss_at = |q: &ModelParams| bpr_loss(q, forward(q, &views).unwrap().out(), &t, 1e-3, BprForm::RawLogit).unwrap();
        for (k, (_, analytic)) in grads.tensors().into_iter().enumerate() {
            for j in 0..analytic.len() {
                let mut q = p.clone();
                q.tensors_mut()[k].1[j] += 1e-5;
                let up = loss_at(&q);
                q.tensors_mut()[k].1[j] -= 2e-5;
                let down = loss_at(&q);
                let numeric = (up - down) / 2e-5;
                assert!((numeric - analytic[j]).abs() <= 1e-6 + 1e-4 * numeric.abs(), "tensor {k} entry {j}");
            }
        }
        checked += 1;
    }
}

#[test]
fn gradients_follow_view_permutation() {
    let mut r = common::rng(6);
    let (hh, p) = tiny();
    let views = views_of(&hh, &mut r, 4);
    let reversed: Vec<ViewIncidence> = views.iter().rev().cloned().collect();
    let g = BipartiteGraph::from_edges(3, 5, hgrec::construction::reconstruct_interactions(&hh)).unwrap();
    let t = random_triplets(&mut r, &g, 8);
    let a = backward(&p, &views, &t, 1e-4, BprForm::SigmoidDifference).unwrap();
    let b = backward(&p, &reversed, &t, 1e-4, BprForm::SigmoidDifference).unwrap();
    for ((_, x), (_, y)) in a.tensors().iter().zip(b.tensors()) {
        for j in 0..x.len() {
            assert!((x[j] - y[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let mut r = common::rng(7);
    let (hh, p) = tiny();
    let views = views_of(&hh, &mut r, 2);
    let g = BipartiteGraph::from_edges(3, 5, hgrec::construction::reconstruct_interactions(&hh)).unwrap();
    let t = random_triplets(&mut r, &g, 4);
    let cache = forward(&p, &views).unwrap();
    let (_, grads) = bpr_loss_and_grad(&p, &views, &cache, &t, 0.0, BprForm::SigmoidDifference).unwrap();
    let mut q = p.clone();
    let mut state = OptimizerState::new(&q);
    for _ in 0..5 {
        adam_step(&mut q, &grads, &mut state, 0.0).unwrap();
    }
    assert_eq!(q, p);
}

#[test]
fn adam_matches_scalar_oracle_over_steps() {
    let (_, p) = tiny();
    let mut q = p.clone();
    let mut state = OptimizerState::new(&q);
    let mut r = common::rng(8);
    let n = q.n_parameters();
    let (mut m, mut v, mut theta): (Vec<f64>, Vec<f64>, Vec<f64>) =
        (vec![0.0; n], vec![0.0; n], p.tensors().iter().flat_map(|(_, t)| t.to_vec()).collect());
    for step in 1..=20 {
        let mut g = q.zeros_like();
        for (_, t) in g.tensors_mut() {
            for x in t.iter_mut() {
                *x = r.random_range(-1.0..1.0);
            }
        }
        let flat: Vec<f64> = g.tensors().iter().flat_map(|(_, t)| t.to_vec()).collect();
        for j in 0..n {
            m[j] = 0.9 * m[j] + 0.1 * flat[j];
            v[j] = 0.999 * v[j] + 0.001 * flat[j] * flat[j];
            let mh = m[j] / (1.0 - 0.9f64.powi(step));
            let vh = v[j] / (1.0 - 0.999f64.powi(step));
            theta[j] -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        adam_step(&mut q, &g, &mut state, 0.01).unwrap();
    }
    let got: Vec<f64> = q.tensors().iter().flat_map(|(_, t)| t.to_vec()).collect();
    for j in 0..n {
        assert!((got[j] - theta[j]).abs() < 1e-12);
    }
}

fn small_run(patience: Option<usize>, epochs: usize) -> hgrec::training::TrainOutcome {
    let cfg = hgrec::pipeline::SyntheticConfig { n_users: 30, n_items: 40, n_categories: 3, n_clusters: 2, density: 0.15, ..Default::default() };
    let data = hgrec::pipeline::generate_synthetic(&cfg).unwrap();
    let ds = hgrec::pipeline::Dataset::from_records(&data.records, &data.categories, false).unwrap();
    let bundle = hgrec::pipeline::split(ds.full.edges(), [0.8, 0.1, 0.1], 3).unwrap();
    let [train_g, val_g, _] = bundle.graphs(ds.full.n_users(), ds.full.n_items()).unwrap();
    let hh = build_hyperedges(&train_g, &ds.categories).unwrap();
    let walk = WalkConfig { views: 3, steps: 10, restart: 0.1, min_vertices: 3, seed: 1, max_attempts: None, start: StartPolicy::AnyVertex };
    let tc = TrainConfig { epochs, patience, learning_rate: 0.01, batch_size: 64, seed: 2, ..Default::default() };
    let td = TrainData { train: train_g, validation: val_g, full: ds.full.clone() };
    train(&td, &hh, &tc, &walk, &ModelConfig { dim: 8, layers: 2, seed: 4 }).unwrap()
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let a = small_run(None, 8);
    let b = small_run(None, 8);
    assert_eq!(a.params, b.params);
    assert_eq!(a.history.len(), 8);
    for (x, y) in a.history.iter().zip(&b.history) {
        assert_eq!((x.train_loss, x.val_ndcg), (y.train_loss, y.val_ndcg));
    }
    assert!(a.history.last().unwrap().train_loss < a.history[0].train_loss);
    let best = a.history.iter().map(|h| h.val_ndcg).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.history[a.best_epoch - 1].val_ndcg, best);
}

#[test]
fn patience_stops_early() {
    let out = small_run(Some(1), 40);
    let last = out.history.last().unwrap().epoch;
    if last < 40 {
        assert_eq!(last, out.best_epoch + 1);
    }
}

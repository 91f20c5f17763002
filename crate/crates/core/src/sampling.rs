//! Random walk with restart over the hypergraph, producing sub-hypergraph
//! views, plus the expected-coverage estimate built on the walk's
//! stationary distribution.
//!
//! A walk step from `v` either restarts at `v0` (probability `restart`) or
//! picks an incident hyperedge with weight `|e|` and then a member other than
//! `v` with weight `d(v')`. All vertices here are global ordinals.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroHypergraph;

/// Which vertices may start a walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPolicy {
    AnyVertex,
    UsersOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Number of views to accept.
    pub views: usize,
    /// Steps per walk.
    pub steps: usize,
    /// Restart probability in [0, 1).
    pub restart: f64,
    /// Minimum vertex count for a view to be accepted.
    pub min_vertices: usize,
    pub seed: u64,
    /// Walk budget; `None` means `20 * views`.
    pub max_attempts: Option<usize>,
    pub start: StartPolicy,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            views: 5,
            steps: 15,
            restart: 0.1,
            min_vertices: 5,
            seed: 0,
            max_attempts: None,
            start: StartPolicy::AnyVertex,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.views == 0 || self.steps == 0 || self.min_vertices == 0 {
            return Err(Error::InvalidArgument("views, steps and min_vertices must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.restart) {
            return Err(Error::InvalidArgument(format!("restart probability {} outside [0, 1]", self.restart)));
        }
        Ok(())
    }

    pub fn attempt_budget(&self) -> usize {
        self.max_attempts.unwrap_or(20 * self.views)
    }
}

/// Vertices and hyperedges visited by one walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubHypergraphView {
    pub start: usize,
    /// Ascending global vertex ordinals, including `start`.
    pub vertices: Vec<usize>,
    /// Ascending indices into the parent hypergraph's hyperedge list.
    pub hyperedges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSet {
    pub views: Vec<SubHypergraphView>,
    /// Walks run, accepted or not.
    pub attempts: usize,
}

/// `P(e | v)`: incident hyperedges weighted by cardinality.
pub fn hyperedge_pick_distribution(hh: &HeteroHypergraph, v: usize) -> Result<Vec<(usize, f64)>> {
    let incident = hh.incident(v);
    if incident.is_empty() {
        return Err(Error::IsolatedVertex(v));
    }
    let total: usize = incident.iter().map(|&e| hh.edge_degree(e)).sum();
    Ok(incident.iter().map(|&e| (e, hh.edge_degree(e) as f64 / total as f64)).collect())
}

/// `P(v' | e, v)`: members of `e` other than `v`, weighted by degree.
pub fn node_pick_distribution(hh: &HeteroHypergraph, e: usize, v: usize) -> Result<Vec<(usize, f64)>> {
    let members = hh.members(e);
    if members.len() < 2 {
        return Err(Error::HyperedgeTooSmall(members.len()));
    }
    let others: Vec<usize> = members.iter().copied().filter(|&u| u != v).collect();
    let total: usize = others.iter().map(|&u| hh.vertex_degree(u)).sum();
    Ok(others.iter().map(|&u| (u, hh.vertex_degree(u) as f64 / total as f64)).collect())
}

/// One-step transition law from `v` for a walk anchored at `v0`, as a dense
/// vector over all vertices.
pub fn transition_distribution(hh: &HeteroHypergraph, v: usize, v0: usize, restart: f64) -> Result<Vec<f64>> {
    let mut p = vec![0.0; hh.n_vertices()];
    p[v0] += restart;
    for (e, pe) in hyperedge_pick_distribution(hh, v)? {
        for (u, pu) in node_pick_distribution(hh, e, v)? {
            p[u] += (1.0 - restart) * pe * pu;
        }
    }
    Ok(p)
}

/// Outcome of a single walk step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Restart,
    Move { edge: usize, to: usize },
}

/// Draws an index from integer weights by inverse CDF.
fn pick_weighted<R: Rng>(rng: &mut R, weights: impl Iterator<Item = usize> + Clone) -> usize {
    let total: usize = weights.clone().sum();
    let mut target = rng.random_range(0..total);
    for (ix, w) in weights.enumerate() {
        if target < w {
            return ix;
        }
        target -= w;
    }
    unreachable!("target below total weight")
}

pub fn walk_step<R: Rng>(hh: &HeteroHypergraph, v: usize, restart: f64, rng: &mut R) -> Result<Step> {
    if rng.random::<f64>() < restart {
        return Ok(Step::Restart);
    }
    let incident = hh.incident(v);
    if incident.is_empty() {
        return Err(Error::IsolatedVertex(v));
    }
    let edge = incident[pick_weighted(rng, incident.iter().map(|&e| hh.edge_degree(e)))];
    let members = hh.members(edge);
    if members.len() < 2 {
        return Err(Error::HyperedgeTooSmall(members.len()));
    }
    let weights = members.iter().map(|&u| if u == v { 0 } else { hh.vertex_degree(u) });
    let to = members[pick_weighted(rng, weights)];
    Ok(Step::Move { edge, to })
}

/// Runs exactly `cfg.steps` steps from `v0`. Restart steps record nothing.
pub fn random_walk<R: Rng>(hh: &HeteroHypergraph, cfg: &WalkConfig, v0: usize, rng: &mut R) -> Result<SubHypergraphView> {
    if hh.vertex_degree(v0) == 0 {
        return Err(Error::IsolatedVertex(v0));
    }
    let mut vertices = BTreeSet::from([v0]);
    let mut hyperedges = BTreeSet::new();
    let mut v = v0;
    for _ in 0..cfg.steps {
        match walk_step(hh, v, cfg.restart, rng)? {
            Step::Restart => v = v0,
            Step::Move { edge, to } => {
                hyperedges.insert(edge);
                vertices.insert(to);
                v = to;
            }
        }
    }
    Ok(SubHypergraphView {
        start: v0,
        vertices: vertices.into_iter().collect(),
        hyperedges: hyperedges.into_iter().collect(),
    })
}

/// RNG stream for walk attempt `attempt` under `seed`.
pub fn walk_rng(seed: u64, attempt: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt as u64);
    rng
}

/// Samples walks until `cfg.views` of them reach `cfg.min_vertices`
/// vertices. Each attempt draws its start vertex and steps from its own
/// stream, so the result depends only on the graph and the config.
pub fn sample_views(hh: &HeteroHypergraph, cfg: &WalkConfig) -> Result<ViewSet> {
    cfg.validate()?;
    let users = hh.layout().n_users;
    let starts: Vec<usize> = hh
        .non_isolated()
        .into_iter()
        .filter(|&v| cfg.start == StartPolicy::AnyVertex || v < users)
        .collect();
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no non-isolated start vertex".into()));
    }
    let budget = cfg.attempt_budget();
    let mut views = Vec::with_capacity(cfg.views);
    let mut attempts = 0;
    while views.len() < cfg.views && attempts < budget {
        let mut rng = walk_rng(cfg.seed, attempts);
        attempts += 1;
        let v0 = starts[rng.random_range(0..starts.len())];
        let view = random_walk(hh, cfg, v0, &mut rng)?;
        if view.vertices.len() >= cfg.min_vertices {
            views.push(view);
        }
    }
    if views.len() < cfg.views {
        return Err(Error::ViewsExhausted {
            wanted: cfg.views,
            accepted: views.len(),
            attempts,
            rate: views.len() as f64 / attempts.max(1) as f64,
        });
    }
    Ok(ViewSet { views, attempts })
}

/// Stationary distribution of the restart walk anchored at `v0`, by power
/// iteration until the max-norm change drops below `tol`.
pub fn stationary_distribution(hh: &HeteroHypergraph, v0: usize, restart: f64, tol: f64) -> Result<Vec<f64>> {
    const MAX_ITERATIONS: usize = 100_000;
    let n = hh.n_vertices();
    let mut rows: Vec<Option<Vec<(usize, f64)>>> = vec![None; n];
    let mut pi = vec![0.0; n];
    pi[v0] = 1.0;
    for _ in 0..MAX_ITERATIONS {
        let mut next = vec![0.0; n];
        for v in 0..n {
            if pi[v] == 0.0 {
                continue;
            }
            if rows[v].is_none() {
                let dense = transition_distribution(hh, v, v0, restart)?;
                rows[v] = Some(dense.into_iter().enumerate().filter(|(_, p)| *p > 0.0).collect());
            }
            for &(u, p) in rows[v].as_ref().unwrap() {
                next[u] += pi[v] * p;
            }
        }
        let change = next.iter().zip(&pi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        pi = next;
        if change < tol {
            return Ok(pi);
        }
    }
    Err(Error::NotConverged(MAX_ITERATIONS))
}

/// `sum_v [1 - (1 - pi_v)^L]`, the approximate number of distinct vertices
/// an `L`-step walk visits.
pub fn expected_unique_nodes(pi: &[f64], steps: usize) -> Result<f64> {
    if pi.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::InvalidArgument("probabilities must be non-negative".into()));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
    }
    Ok(pi.iter().map(|&p| 1.0 - (1.0 - p).powi(steps as i32)).sum())
}

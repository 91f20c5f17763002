//! Python bindings for the `hgrec` recommender core.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hgrec::completion::{run_completion, CompletionConfig};
use hgrec::construction::build_hyperedges;
use hgrec::evaluation::{compute_metrics, rank_items, RankedList, RecallMode};
use hgrec::model::{forward, predict, ModelConfig, ModelParams, ViewIncidence};
use hgrec::pipeline::{generate_synthetic, run_pipeline, RunConfig, SyntheticConfig};
use hgrec::sampling::{sample_views, StartPolicy, WalkConfig};
use hgrec::{BipartiteGraph, CategoryMap, HeteroHypergraph, VertexId};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Metrics = BTreeMap<usize, BTreeMap<&'static str, f64>>;

fn metrics_dict(report: &hgrec::evaluation::MetricsReport) -> Metrics {
    report
        .per_k
        .iter()
        .map(|m| {
            let row = [("P", m.precision), ("R", m.recall), ("nDCG", m.ndcg), ("MRR", m.mrr), ("F1", m.f1)];
            (m.k, row.into_iter().collect())
        })
        .collect()
}

/// Heterogeneous hypergraph over users, items and categories.
#[pyclass(name = "Hypergraph", module = "pyhgrec", skip_from_py_object)]
#[derive(Clone)]
struct PyHypergraph {
    inner: HeteroHypergraph,
}

#[pymethods]
impl PyHypergraph {
    /// Builds one hyperedge per (user, category) from `(user, item)` pairs.
    /// `item_categories[i]` is the category of item `i`.
    #[new]
    #[pyo3(signature = (n_users, edges, item_categories, n_categories=None))]
    fn new(
        n_users: usize,
        edges: Vec<(usize, usize)>,
        item_categories: Vec<usize>,
        n_categories: Option<usize>,
    ) -> PyResult<Self> {
        let n_items = item_categories.len();
        let n_cat = n_categories.unwrap_or_else(|| item_categories.iter().max().map_or(0, |c| c + 1));
        let g = BipartiteGraph::from_edges(n_users, n_items, edges).map_err(value_err)?;
        let cm = CategoryMap::new(n_cat, item_categories).map_err(value_err)?;
        Ok(PyHypergraph { inner: build_hyperedges(&g, &cm).map_err(value_err)? })
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    #[getter]
    fn n_hyperedges(&self) -> usize {
        self.inner.n_hyperedges()
    }

    /// `(n_users, n_items, n_categories)`.
    #[getter]
    fn layout(&self) -> (usize, usize, usize) {
        let l = self.inner.layout();
        (l.n_users, l.n_items, l.n_categories)
    }

    /// `(user, items, category)` triples in index order.
    fn hyperedges(&self) -> Vec<(usize, Vec<usize>, usize)> {
        self.inner.hyperedges().iter().map(|h| (h.user, h.items.clone(), h.category)).collect()
    }

    /// Global vertex ordinals of hyperedge `e`.
    fn members(&self, e: usize) -> PyResult<Vec<usize>> {
        if e >= self.inner.n_hyperedges() {
            return Err(value_err(format!("hyperedge {e} out of range")));
        }
        Ok(self.inner.members(e).to_vec())
    }

    /// Completed copy of the hypergraph and the indices of added hyperedges.
    #[pyo3(signature = (rho, k_clusters=None, seed=0))]
    fn complete(&self, rho: f64, k_clusters: Option<usize>, seed: u64) -> PyResult<(PyHypergraph, Vec<usize>)> {
        let (c, _) = run_completion(&self.inner, None, &CompletionConfig { rho, k_clusters, seed }).map_err(value_err)?;
        let added = c.added.iter().map(|a| a.edge).collect();
        Ok((PyHypergraph { inner: c.graph }, added))
    }

    /// Random-walk views as `(start, vertices, hyperedges)` triples.
    #[pyo3(signature = (views=5, steps=15, restart=0.1, min_vertices=5, seed=0, users_only=false))]
    fn sample_views(
        &self,
        views: usize,
        steps: usize,
        restart: f64,
        min_vertices: usize,
        seed: u64,
        users_only: bool,
    ) -> PyResult<Vec<(usize, Vec<usize>, Vec<usize>)>> {
        let start = if users_only { StartPolicy::UsersOnly } else { StartPolicy::AnyVertex };
        let cfg = WalkConfig { views, steps, restart, min_vertices, seed, max_attempts: None, start };
        let set = sample_views(&self.inner, &cfg).map_err(value_err)?;
        Ok(set.views.into_iter().map(|v| (v.start, v.vertices, v.hyperedges)).collect())
    }

    fn __repr__(&self) -> String {
        let (u, i, c) = self.layout();
        format!("Hypergraph(users={u}, items={i}, categories={c}, hyperedges={})", self.inner.n_hyperedges())
    }
}

impl PyModel {
    fn last_output(&self) -> PyResult<&ndarray::Array2<f64>> {
        self.out.as_ref().ok_or_else(|| PyRuntimeError::new_err("call forward() first"))
    }
}

/// Freshly initialised model parameters for a hypergraph.
#[pyclass(name = "Model", module = "pyhgrec")]
struct PyModel {
    params: ModelParams,
    graph: HeteroHypergraph,
    out: Option<ndarray::Array2<f64>>,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (graph, dim=64, layers=2, seed=0))]
    fn new(graph: &PyHypergraph, dim: usize, layers: usize, seed: u64) -> PyResult<Self> {
        let params = ModelParams::init(graph.inner.layout(), &ModelConfig { dim, layers, seed }).map_err(value_err)?;
        Ok(PyModel { params, graph: graph.inner.clone(), out: None })
    }

    #[getter]
    fn n_parameters(&self) -> usize {
        self.params.n_parameters()
    }

    /// Encodes every view (a list of hyperedge indices each) and fuses them.
    /// Returns the output embeddings as rows.
    fn forward(&mut self, views: Vec<Vec<usize>>) -> PyResult<Vec<Vec<f64>>> {
        let n = self.graph.n_hyperedges();
        let mut incs = Vec::with_capacity(views.len());
        for v in &views {
            if let Some(&bad) = v.iter().find(|&&e| e >= n) {
                return Err(value_err(format!("hyperedge {bad} out of range")));
            }
            let members = v.iter().map(|&e| self.graph.members(e).to_vec()).collect();
            incs.push(ViewIncidence::from_members(self.graph.n_vertices(), members).map_err(value_err)?);
        }
        let cache = forward(&self.params, &incs).map_err(value_err)?;
        let out = cache.out().clone();
        let rows = out.rows().into_iter().map(|r| r.to_vec()).collect();
        self.out = Some(out);
        Ok(rows)
    }

    /// Interaction probability from the last forward pass.
    fn predict(&self, user: usize, item: usize) -> PyResult<f64> {
        predict(self.last_output()?, &self.params, VertexId::user(user), VertexId::item(item)).map_err(value_err)
    }

    /// Top-`k` items for `user` from the last forward pass.
    #[pyo3(signature = (user, k=10, exclude=Vec::new()))]
    fn recommend(&self, user: usize, k: usize, exclude: Vec<usize>) -> PyResult<Vec<(usize, f64)>> {
        let list = rank_items(user, self.last_output()?, &self.params, &exclude, k).map_err(value_err)?;
        Ok(list.items.into_iter().zip(list.scores).collect())
    }
}

/// Pipeline configuration with dotted keys (`train.epochs`, `completion.rho`, ...).
#[pyclass(name = "Config", module = "pyhgrec")]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    /// Defaults with `{"dotted.key": "value"}` overrides applied.
    #[new]
    #[pyo3(signature = (overrides=BTreeMap::new()))]
    fn new(overrides: BTreeMap<String, String>) -> PyResult<Self> {
        let mut inner = RunConfig::default();
        for (k, v) in &overrides {
            inner.set_str(k, v).map_err(value_err)?;
        }
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyConfig { inner: RunConfig::from_json(text).map_err(value_err)? })
    }

    /// Sets a key from text; JSON values are parsed, anything else is a string.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set_str(key, value).map_err(value_err)
    }

    /// The value of a key as JSON text.
    fn get(&self, key: &str) -> PyResult<String> {
        self.inner.get(key).map(|v| v.to_string()).ok_or_else(|| value_err(format!("unknown key {key:?}")))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }
}

/// Runs the whole pipeline. Returns `{K: {metric: value}}` for each run.
#[pyfunction]
fn run(config: &PyConfig) -> PyResult<Vec<Metrics>> {
    let runs = run_pipeline(&config.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(runs.iter().map(|a| metrics_dict(&a.report)).collect())
}

/// Synthetic clustered dataset written as `interactions.tsv`,
/// `categories.tsv` and `labels.tsv` under `output`. Returns the planted
/// label of each user.
#[pyfunction]
#[pyo3(signature = (output, n_users=200, n_items=300, n_categories=6, n_clusters=4, density=0.05, concentration=0.9, seed=0))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    output: PathBuf,
    n_users: usize,
    n_items: usize,
    n_categories: usize,
    n_clusters: usize,
    density: f64,
    concentration: f64,
    seed: u64,
) -> PyResult<Vec<usize>> {
    let cfg = SyntheticConfig { n_users, n_items, n_categories, n_clusters, density, concentration, seed };
    let data = generate_synthetic(&cfg).map_err(value_err)?;
    let write = |name: &str, text: String| hgrec::io::write_text(&output.join(name), &text).map_err(value_err);
    write("interactions.tsv", data.interactions_tsv())?;
    write("categories.tsv", data.categories_tsv())?;
    write("labels.tsv", data.labels_tsv())?;
    Ok(data.labels)
}

/// Ranking metrics for `{user: ranked items}` against `(user, item)` truth.
#[pyfunction]
#[pyo3(signature = (ranked, truth, n_users, n_items, ks=vec![5, 10, 15, 20], standard_recall=false))]
fn evaluate(
    ranked: BTreeMap<usize, Vec<usize>>,
    truth: Vec<(usize, usize)>,
    n_users: usize,
    n_items: usize,
    ks: Vec<usize>,
    standard_recall: bool,
) -> PyResult<Metrics> {
    let truth = BipartiteGraph::from_edges(n_users, n_items, truth).map_err(value_err)?;
    let lists: Vec<RankedList> = ranked
        .into_iter()
        .map(|(user, items)| RankedList { user, scores: vec![0.0; items.len()], items })
        .collect();
    let mode = if standard_recall { RecallMode::TruthDenominator } else { RecallMode::CutoffDenominator };
    let report = compute_metrics(&lists, &truth, &ks, mode).map_err(value_err)?;
    Ok(metrics_dict(&report))
}

/// Built-in correctness checks as `(name, passed, detail)`.
#[pyfunction]
fn check() -> Vec<(String, bool, String)> {
    hgrec::check::run_checks().into_iter().map(|r| (r.name.to_string(), r.passed, r.detail)).collect()
}

#[pymodule]
fn pyhgrec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHypergraph>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}

//! End-to-end orchestration and artifact persistence.
//!
//! Every stage reads and writes plain files in the output directory, so the
//! single-stage commands and the full run produce the same artifacts:
//!
//! | stage | writes |
//! |-------|--------|
//! | ingest | `idmap.tsv`, `interactions.tsv`, `categories.tsv` |
//! | split | `split_train.tsv`, `split_val.tsv`, `split_test.tsv` |
//! | build | `hypergraph.tsv` |
//! | complete | `hypergraph_completed.tsv`, `completion.tsv` |
//! | sample | `views.tsv` |
//! | train | `checkpoint.txt`, `history.csv` |
//! | evaluate | `metrics.csv`, `metrics.txt`, optionally `metrics_per_user.csv` |
//!
//! A full run also writes `manifest.json`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::completion::{run_completion, Clustering, Completion};
use crate::construction::build_hyperedges;
use crate::error::{Error, Result};
use crate::evaluation::{compute_metrics, rank_all, MetricsReport};
use crate::graph::{build_bipartite, build_category_map, BipartiteGraph, CategoryMap, HeteroHypergraph, IdMap};
use crate::io;
use crate::model::{forward, ModelParams};
use crate::pipeline::config::RunConfig;
use crate::pipeline::split::{split, SplitBundle};
use crate::sampling::{sample_views, ViewSet};
use crate::training::{history_csv, train, view_incidences, TrainData, TrainOutcome};

pub const IDMAP: &str = "idmap.tsv";
pub const INTERACTIONS: &str = "interactions.tsv";
pub const CATEGORIES: &str = "categories.tsv";
pub const SPLIT_TRAIN: &str = "split_train.tsv";
pub const SPLIT_VAL: &str = "split_val.tsv";
pub const SPLIT_TEST: &str = "split_test.tsv";
pub const HYPERGRAPH: &str = "hypergraph.tsv";
pub const HYPERGRAPH_COMPLETED: &str = "hypergraph_completed.tsv";
pub const COMPLETION: &str = "completion.tsv";
pub const VIEWS: &str = "views.tsv";
pub const CHECKPOINT: &str = "checkpoint.txt";
pub const HISTORY: &str = "history.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_TXT: &str = "metrics.txt";
pub const METRICS_PER_USER: &str = "metrics_per_user.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Split,
    Build,
    Complete,
    Sample,
    Train,
    Evaluate,
    Write,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Build => "build",
            Stage::Complete => "complete",
            Stage::Sample => "sample",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A stage failure: the stage name plus the underlying cause.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl PipelineError {
    /// 2 config, 3 data, 4 divergence, 5 evaluation.
    pub fn exit_code(&self) -> i32 {
        match (&self.source, self.stage) {
            (Error::Config(_), _) | (_, Stage::Config) => 2,
            (Error::Divergence { .. }, _) => 4,
            (Error::Evaluation(_), _) | (_, Stage::Evaluate) => 5,
            _ => 3,
        }
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

pub type StageResult<T> = std::result::Result<T, PipelineError>;

/// Ingested interactions with their id map and category assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: IdMap,
    pub full: BipartiteGraph,
    pub categories: CategoryMap,
}

impl Dataset {
    pub fn from_records(
        records: &[crate::graph::InteractionRecord],
        category_rows: &[(String, String)],
        multi_category: bool,
    ) -> Result<Self> {
        let (full, mut ids) = build_bipartite(records)?;
        let categories = build_category_map(&mut ids, category_rows, multi_category)?;
        Ok(Dataset { ids, full, categories })
    }

    fn graph(&self, edges: &[(usize, usize)]) -> Result<BipartiteGraph> {
        BipartiteGraph::from_edges(self.full.n_users(), self.full.n_items(), edges.iter().copied())
    }
}

/// Everything a full run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub split: SplitBundle,
    /// Built from training edges only, before completion.
    pub hypergraph: HeteroHypergraph,
    pub completion: Completion,
    pub clustering: Option<Clustering>,
    pub outcome: TrainOutcome,
    pub report: MetricsReport,
}

fn input_path(p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    p.clone().ok_or_else(|| Error::Config(format!("{key} is not set")))
}

pub fn ingest_inputs(cfg: &RunConfig) -> StageResult<Dataset> {
    let inter = input_path(&cfg.interactions, "paths.interactions").at(Stage::Config)?;
    let cats = input_path(&cfg.categories, "paths.categories").at(Stage::Config)?;
    let records = io::read_interactions(&inter).at(Stage::Ingest)?;
    let rows = io::read_category_rows(&cats).at(Stage::Ingest)?;
    Dataset::from_records(&records, &rows, cfg.multi_category).at(Stage::Ingest)
}

pub fn split_dataset(cfg: &RunConfig, ds: &Dataset) -> StageResult<SplitBundle> {
    split(ds.full.edges(), cfg.split_ratios, cfg.split_seed()).at(Stage::Split)
}

pub fn build_train_hypergraph(ds: &Dataset, sp: &SplitBundle) -> StageResult<HeteroHypergraph> {
    let train = ds.graph(&sp.train).at(Stage::Build)?;
    build_hyperedges(&train, &ds.categories).at(Stage::Build)
}

pub fn complete(cfg: &RunConfig, hh: &HeteroHypergraph) -> StageResult<(Completion, Option<Clustering>)> {
    run_completion(hh, None, &cfg.completion_config()).at(Stage::Complete)
}

pub fn sample(cfg: &RunConfig, hh: &HeteroHypergraph) -> StageResult<ViewSet> {
    sample_views(hh, &cfg.walk_config(hh.n_vertices())).at(Stage::Sample)
}

fn train_data(ds: &Dataset, sp: &SplitBundle) -> Result<TrainData> {
    Ok(TrainData { train: ds.graph(&sp.train)?, validation: ds.graph(&sp.validation)?, full: ds.full.clone() })
}

pub fn train_model(cfg: &RunConfig, ds: &Dataset, sp: &SplitBundle, hh: &HeteroHypergraph) -> StageResult<TrainOutcome> {
    let data = train_data(ds, sp).at(Stage::Train)?;
    train(&data, hh, &cfg.train_config(0), &cfg.walk_config(hh.n_vertices()), &cfg.model_config()).at(Stage::Train)
}

/// Ranks every user with test edges, excluding their train and validation
/// items, and scores against the test split.
pub fn evaluate(
    cfg: &RunConfig,
    ds: &Dataset,
    sp: &SplitBundle,
    hh: &HeteroHypergraph,
    views: &ViewSet,
    params: &ModelParams,
) -> StageResult<MetricsReport> {
    let run = || -> Result<MetricsReport> {
        let test = ds.graph(&sp.test)?;
        let seen: Vec<(usize, usize)> = sp.train.iter().chain(&sp.validation).copied().collect();
        let seen = ds.graph(&seen)?;
        let incidences = view_incidences(hh, views)?;
        let cache = forward(params, &incidences)?;
        let users: Vec<usize> = (0..test.n_users()).filter(|&u| !test.items_of(u).is_empty()).collect();
        let k_max = *cfg.ks.iter().max().expect("validated");
        let lists = rank_all(&users, cache.out(), params, &seen, k_max)?;
        compute_metrics(&lists, &test, &cfg.ks, cfg.recall_mode())
    };
    run().at(Stage::Evaluate)
}

/// Runs split through evaluation on an ingested dataset, in memory.
pub fn run_on_dataset(cfg: &RunConfig, dataset: Dataset) -> StageResult<RunArtifacts> {
    cfg.validate().at(Stage::Config)?;
    let cfg = cfg.resolved();
    let split = split_dataset(&cfg, &dataset)?;
    log::info!("split: {} train, {} val, {} test", split.train.len(), split.validation.len(), split.test.len());
    let hypergraph = build_train_hypergraph(&dataset, &split)?;
    log::info!("built {} hyperedges", hypergraph.n_hyperedges());
    let (completion, clustering) = complete(&cfg, &hypergraph)?;
    log::info!("completion added {} hyperedges", completion.added.len());
    // sampled here for stage attribution; training draws the identical set
    sample(&cfg, &completion.graph)?;
    let outcome = train_model(&cfg, &dataset, &split, &completion.graph)?;
    let report = evaluate(&cfg, &dataset, &split, &completion.graph, &outcome.views, &outcome.params)?;
    Ok(RunArtifacts { config: cfg, dataset, split, hypergraph, completion, clustering, outcome, report })
}

fn write(dir: &Path, name: &str, text: &str) -> StageResult<()> {
    io::write_text(&dir.join(name), text).at(Stage::Write)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Files whose bytes must reproduce under replay (history holds timings).
const HASHED: &[&str] = &[
    IDMAP,
    INTERACTIONS,
    CATEGORIES,
    SPLIT_TRAIN,
    SPLIT_VAL,
    SPLIT_TEST,
    HYPERGRAPH,
    HYPERGRAPH_COMPLETED,
    COMPLETION,
    VIEWS,
    CHECKPOINT,
    METRICS_CSV,
    METRICS_TXT,
];

pub fn manifest(a: &RunArtifacts, hashes: &[(String, String)]) -> Value {
    let cfg = &a.config;
    let cs = cfg.completion_seed.expect("resolved");
    let ids = &a.dataset.ids;
    json!({
        "format": "hgrec-manifest 1",
        "fingerprint": cfg.fingerprint(),
        "config": Value::Object(cfg.to_flat()),
        "seeds": {
            "split": cfg.split_seed,
            "kmeans": cs,
            "completion_sampling": cs.wrapping_add(1),
            "walk": cfg.walk_seed,
            "model_init": cfg.model_seed,
            "train": cfg.train_seed,
        },
        "counts": {
            "users": ids.users.len(),
            "items": ids.items.len(),
            "categories": ids.categories.len(),
            "interactions": a.dataset.full.edges().len(),
            "train": a.split.train.len(),
            "validation": a.split.validation.len(),
            "test": a.split.test.len(),
            "split_repaired": a.split.repaired,
            "hyperedges": a.hypergraph.n_hyperedges(),
            "hyperedges_completed": a.completion.graph.n_hyperedges(),
            "completion_added": a.completion.added.len(),
            "clusters": a.clustering.as_ref().map(|c| c.k),
            "view_attempts": a.outcome.views.attempts,
            "epochs_run": a.outcome.history.len(),
            "best_epoch": a.outcome.best_epoch,
            "skipped_triplets": a.outcome.skipped_triplets,
        },
        "artifacts": hashes.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect::<serde_json::Map<_, _>>(),
    })
}

/// Writes every artifact of a finished run into `dir`.
pub fn write_artifacts(dir: &Path, a: &RunArtifacts) -> StageResult<()> {
    let ids = &a.dataset.ids;
    let fp = a.config.fingerprint();
    let mut files: Vec<(&str, String)> = vec![
        (IDMAP, io::idmap_to_tsv(ids)),
        (INTERACTIONS, io::edges_to_tsv(a.dataset.full.edges(), ids)),
        (CATEGORIES, io::category_map_to_tsv(ids, &a.dataset.categories)),
        (SPLIT_TRAIN, io::edges_to_tsv(&a.split.train, ids)),
        (SPLIT_VAL, io::edges_to_tsv(&a.split.validation, ids)),
        (SPLIT_TEST, io::edges_to_tsv(&a.split.test, ids)),
        (HYPERGRAPH, io::hypergraph_to_tsv(&a.hypergraph, ids)),
        (HYPERGRAPH_COMPLETED, io::hypergraph_to_tsv(&a.completion.graph, ids)),
        (COMPLETION, io::completion_report(&a.completion, ids)),
        (VIEWS, io::views_to_tsv(&a.outcome.views)),
        (CHECKPOINT, checkpoint::to_text(&a.outcome.params, &fp)),
        (HISTORY, history_csv(&a.outcome.history)),
        (METRICS_CSV, a.report.to_csv()),
        (METRICS_TXT, a.report.to_table()),
    ];
    if a.config.per_user {
        files.push((METRICS_PER_USER, a.report.per_user_csv()));
    }
    let mut hashes = Vec::new();
    for (name, text) in &files {
        write(dir, name, text)?;
        if HASHED.contains(name) {
            hashes.push((name.to_string(), sha256_hex(text.as_bytes())));
        }
    }
    let m = serde_json::to_string_pretty(&manifest(a, &hashes)).expect("serializable");
    write(dir, MANIFEST, &(m + "\n"))
}

/// Reads the configuration recorded in a manifest.
pub fn config_from_manifest(text: &str) -> Result<RunConfig> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid manifest: {e}")))?;
    let cfg = v.get("config").ok_or_else(|| Error::Config("manifest has no config".into()))?;
    RunConfig::from_json(&cfg.to_string())
}

/// Mean and sample standard deviation of one metric across repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatStat {
    pub k: usize,
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
}

pub fn summarize_repeats(reports: &[MetricsReport]) -> Vec<RepeatStat> {
    let Some(first) = reports.first() else { return Vec::new() };
    let mut out = Vec::new();
    for m in &first.per_k {
        let rows: Vec<_> = reports.iter().filter_map(|r| r.at(m.k)).collect();
        let cols: [(&'static str, Vec<f64>); 5] = [
            ("P", rows.iter().map(|x| x.precision).collect()),
            ("R", rows.iter().map(|x| x.recall).collect()),
            ("nDCG", rows.iter().map(|x| x.ndcg).collect()),
            ("MRR", rows.iter().map(|x| x.mrr).collect()),
            ("F1", rows.iter().map(|x| x.f1).collect()),
        ];
        for (metric, xs) in cols {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            out.push(RepeatStat { k: m.k, metric, mean, std: var.sqrt() });
        }
    }
    out
}

pub fn repeat_summary_csv(stats: &[RepeatStat]) -> String {
    let mut s = String::from("K,metric,mean,std\n");
    for r in stats {
        s.push_str(&format!("{},{},{:.6},{:.6}\n", r.k, r.metric, r.mean, r.std));
    }
    s
}

/// Full file-based run. With `run.repeats > 1` each repeat goes to
/// `repeat_<r>/` under the output directory and a `summary.csv` with mean
/// and standard deviation is written alongside.
pub fn run_pipeline(cfg: &RunConfig) -> StageResult<Vec<RunArtifacts>> {
    cfg.validate().at(Stage::Config)?;
    let dataset = ingest_inputs(cfg)?;
    if cfg.repeats == 1 {
        let a = run_on_dataset(cfg, dataset)?;
        write_artifacts(&cfg.output, &a)?;
        return Ok(vec![a]);
    }
    let mut runs = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let c = RunConfig { output: cfg.output.join(format!("repeat_{r}")), ..cfg.for_repeat(r) };
        log::info!("repeat {r} with seed {}", c.seed);
        let a = run_on_dataset(&c, dataset.clone())?;
        write_artifacts(&c.output, &a)?;
        runs.push(a);
    }
    let reports: Vec<MetricsReport> = runs.iter().map(|a| a.report.clone()).collect();
    write(&cfg.output, "summary.csv", &repeat_summary_csv(&summarize_repeats(&reports)))?;
    Ok(runs)
}

// ---- single-stage commands over the output directory ----

fn read(dir: &Path, name: &str, stage: Stage) -> StageResult<String> {
    io::read_text(&dir.join(name)).at(stage)
}

/// Reloads the ingested dataset from `dir`.
pub fn load_dataset(dir: &Path, multi_category: bool, stage: Stage) -> StageResult<Dataset> {
    let ids_text = read(dir, IDMAP, stage)?;
    let mut ids = io::idmap_from_tsv(&ids_text, IDMAP).at(stage)?;
    let edges = io::edges_from_tsv(&read(dir, INTERACTIONS, stage)?, &ids, INTERACTIONS).at(stage)?;
    let rows = io::parse_category_rows(&read(dir, CATEGORIES, stage)?, CATEGORIES).at(stage)?;
    let categories = build_category_map(&mut ids, &rows, multi_category).at(stage)?;
    let full = BipartiteGraph::from_edges(ids.users.len(), ids.items.len(), edges).at(stage)?;
    Ok(Dataset { ids, full, categories })
}

pub fn load_split(dir: &Path, ds: &Dataset, seed: u64, stage: Stage) -> StageResult<SplitBundle> {
    let part = |name: &str| -> StageResult<Vec<(usize, usize)>> {
        io::edges_from_tsv(&read(dir, name, stage)?, &ds.ids, name).at(stage)
    };
    Ok(SplitBundle { train: part(SPLIT_TRAIN)?, validation: part(SPLIT_VAL)?, test: part(SPLIT_TEST)?, seed, repaired: 0 })
}

pub fn load_hypergraph(dir: &Path, name: &str, ds: &Dataset, stage: Stage) -> StageResult<HeteroHypergraph> {
    io::hypergraph_from_tsv(&read(dir, name, stage)?, &ds.ids, name).at(stage)
}

pub fn stage_ingest(cfg: &RunConfig) -> StageResult<Dataset> {
    let ds = ingest_inputs(cfg)?;
    let dir = &cfg.output;
    write(dir, IDMAP, &io::idmap_to_tsv(&ds.ids))?;
    write(dir, INTERACTIONS, &io::edges_to_tsv(ds.full.edges(), &ds.ids))?;
    write(dir, CATEGORIES, &io::category_map_to_tsv(&ds.ids, &ds.categories))?;
    Ok(ds)
}

pub fn stage_split(cfg: &RunConfig) -> StageResult<SplitBundle> {
    cfg.validate().at(Stage::Config)?;
    let ds = load_dataset(&cfg.output, cfg.multi_category, Stage::Split)?;
    let sp = split_dataset(cfg, &ds)?;
    write(&cfg.output, SPLIT_TRAIN, &io::edges_to_tsv(&sp.train, &ds.ids))?;
    write(&cfg.output, SPLIT_VAL, &io::edges_to_tsv(&sp.validation, &ds.ids))?;
    write(&cfg.output, SPLIT_TEST, &io::edges_to_tsv(&sp.test, &ds.ids))?;
    Ok(sp)
}

pub fn stage_build(cfg: &RunConfig) -> StageResult<HeteroHypergraph> {
    let ds = load_dataset(&cfg.output, cfg.multi_category, Stage::Build)?;
    let sp = load_split(&cfg.output, &ds, cfg.split_seed(), Stage::Build)?;
    let hh = build_train_hypergraph(&ds, &sp)?;
    write(&cfg.output, HYPERGRAPH, &io::hypergraph_to_tsv(&hh, &ds.ids))?;
    Ok(hh)
}

pub fn stage_complete(cfg: &RunConfig) -> StageResult<Completion> {
    cfg.validate().at(Stage::Config)?;
    let ds = load_dataset(&cfg.output, cfg.multi_category, Stage::Complete)?;
    let hh = load_hypergraph(&cfg.output, HYPERGRAPH, &ds, Stage::Complete)?;
    let (c, _) = complete(cfg, &hh)?;
    write(&cfg.output, HYPERGRAPH_COMPLETED, &io::hypergraph_to_tsv(&c.graph, &ds.ids))?;
    write(&cfg.output, COMPLETION, &io::completion_report(&c, &ds.ids))?;
    Ok(c)
}

pub fn stage_sample(cfg: &RunConfig) -> StageResult<ViewSet> {
    cfg.validate().at(Stage::Config)?;
    let ds = load_dataset(&cfg.output, cfg.multi_category, Stage::Sample)?;
    let hh = load_hypergraph(&cfg.output, HYPERGRAPH_COMPLETED, &ds, Stage::Sample)?;
    let views = sample(cfg, &hh)?;
    write(&cfg.output, VIEWS, &io::views_to_tsv(&views))?;
    Ok(views)
}

pub fn stage_train(cfg: &RunConfig) -> StageResult<TrainOutcome> {
    cfg.validate().at(Stage::Config)?;
    let ds = load_dataset(&cfg.output, cfg.multi_category, Stage::Train)?;
    let sp = load_split(&cfg.output, &ds, cfg.split_seed(), Stage::Train)?;
    let hh = load_hypergraph(&cfg.output, HYPERGRAPH_COMPLETED, &ds, Stage::Train)?;
    let outcome = train_model(cfg, &ds, &sp, &hh)?;
    write(&cfg.output, CHECKPOINT, &checkpoint::to_text(&outcome.params, &cfg.fingerprint()))?;
    write(&cfg.output, HISTORY, &history_csv(&outcome.history))?;
    Ok(outcome)
}

pub fn stage_eval(cfg: &RunConfig) -> StageResult<MetricsReport> {
    cfg.validate().at(Stage::Config)?;
    let dir = &cfg.output;
    let ds = load_dataset(dir, cfg.multi_category, Stage::Evaluate)?;
    let sp = load_split(dir, &ds, cfg.split_seed(), Stage::Evaluate)?;
    let hh = load_hypergraph(dir, HYPERGRAPH_COMPLETED, &ds, Stage::Evaluate)?;
    let (params, fp) = checkpoint::load(&dir.join(CHECKPOINT)).at(Stage::Evaluate)?;
    if fp != cfg.fingerprint() {
        return Err(Error::Config("checkpoint was trained under a different configuration".into())).at(Stage::Config);
    }
    let views = sample(cfg, &hh)?;
    let report = evaluate(cfg, &ds, &sp, &hh, &views, &params)?;
    write(dir, METRICS_CSV, &report.to_csv())?;
    write(dir, METRICS_TXT, &report.to_table())?;
    if cfg.per_user {
        write(dir, METRICS_PER_USER, &report.per_user_csv())?;
    }
    Ok(report)
}

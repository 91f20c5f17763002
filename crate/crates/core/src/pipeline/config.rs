//! Run configuration as a flat, namespaced key/value object.
//!
//! Files are JSON objects whose keys are dotted names such as
//! `completion.rho`. Every key can be overridden from the environment as
//! `HGREC_` followed by the upper-cased key with dots replaced by
//! underscores, e.g. `HGREC_COMPLETION_RHO=0.05`.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::completion::CompletionConfig;
use crate::error::{Error, Result};
use crate::evaluation::RecallMode;
use crate::model::ModelConfig;
use crate::sampling::{StartPolicy, WalkConfig};
use crate::training::{BprForm, TrainConfig};

pub const ENV_PREFIX: &str = "HGREC_";

/// Stage offsets added to the master seed when a stage seed is unset.
const SPLIT_OFFSET: u64 = 11;
const COMPLETION_OFFSET: u64 = 23;
const WALK_OFFSET: u64 = 37;
const MODEL_OFFSET: u64 = 41;
const TRAIN_OFFSET: u64 = 53;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub interactions: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub output: PathBuf,
    pub multi_category: bool,

    pub seed: u64,
    pub split_ratios: [f64; 3],
    pub split_seed: Option<u64>,

    pub ks: Vec<usize>,
    pub standard_recall: bool,
    pub per_user: bool,

    pub walk_views: usize,
    pub walk_steps: usize,
    pub walk_restart: f64,
    pub walk_min_vertices: usize,
    pub walk_max_attempts: Option<usize>,
    pub walk_users_only: bool,
    pub walk_seed: Option<u64>,

    pub completion_rho: f64,
    pub completion_k_clusters: Option<usize>,
    pub completion_seed: Option<u64>,

    pub model_dim: usize,
    pub model_layers: usize,
    pub model_seed: Option<u64>,

    pub learning_rate: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: Option<usize>,
    pub negatives_per_positive: usize,
    pub raw_logit_bpr: bool,
    pub resample_views: bool,
    pub train_seed: Option<u64>,

    pub threads: Option<usize>,
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let walk = WalkConfig::default();
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            interactions: None,
            categories: None,
            output: PathBuf::from("out"),
            multi_category: false,
            seed: 0,
            split_ratios: [0.8, 0.1, 0.1],
            split_seed: None,
            ks: vec![5, 10, 15, 20],
            standard_recall: false,
            per_user: false,
            walk_views: walk.views,
            walk_steps: walk.steps,
            walk_restart: walk.restart,
            walk_min_vertices: walk.min_vertices,
            walk_max_attempts: walk.max_attempts,
            walk_users_only: walk.start == StartPolicy::UsersOnly,
            walk_seed: None,
            completion_rho: 0.05,
            completion_k_clusters: None,
            completion_seed: None,
            model_dim: model.dim,
            model_layers: model.layers,
            model_seed: None,
            learning_rate: train.learning_rate,
            lambda: train.lambda,
            epochs: train.epochs,
            batch_size: train.batch_size,
            patience: train.patience,
            negatives_per_positive: train.negatives_per_positive,
            raw_logit_bpr: train.bpr_form == BprForm::RawLogit,
            resample_views: train.resample_views,
            train_seed: None,
            threads: None,
            repeats: 1,
        }
    }
}

/// Every recognised key, in file order.
pub const KEYS: &[&str] = &[
    "paths.interactions",
    "paths.categories",
    "paths.output",
    "ingest.multi_category",
    "seed",
    "split.train",
    "split.val",
    "split.test",
    "split.seed",
    "eval.ks",
    "eval.standard_recall",
    "eval.per_user",
    "walk.views",
    "walk.steps",
    "walk.restart",
    "walk.min_vertices",
    "walk.max_attempts",
    "walk.users_only",
    "walk.seed",
    "completion.rho",
    "completion.k_clusters",
    "completion.seed",
    "model.dim",
    "model.layers",
    "model.seed",
    "train.learning_rate",
    "train.lambda",
    "train.epochs",
    "train.batch_size",
    "train.patience",
    "train.negatives_per_positive",
    "train.raw_logit_bpr",
    "train.resample_views",
    "train.seed",
    "run.threads",
    "run.repeats",
];

/// Keys that do not change results and are left out of the fingerprint.
const UNFINGERPRINTED: &[&str] =
    &["paths.interactions", "paths.categories", "paths.output", "run.threads", "run.repeats", "eval.per_user"];

fn bad(key: &str, v: &Value, want: &str) -> Error {
    Error::Config(format!("{key}: expected {want}, got {v}"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| bad(key, v, "a number"))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_u64().map(|n| n as usize).ok_or_else(|| bad(key, v, "a non-negative integer"))
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    v.as_u64().ok_or_else(|| bad(key, v, "a non-negative integer"))
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| bad(key, v, "true or false"))
}

fn as_path(key: &str, v: &Value) -> Result<PathBuf> {
    v.as_str().map(PathBuf::from).ok_or_else(|| bad(key, v, "a path string"))
}

fn opt<T>(v: &Value, f: impl FnOnce() -> Result<T>) -> Result<Option<T>> {
    if v.is_null() {
        Ok(None)
    } else {
        f().map(Some)
    }
}

fn path_value(p: &Option<PathBuf>) -> Value {
    p.as_ref().map_or(Value::Null, |p| Value::String(p.display().to_string()))
}

fn opt_value<T: Into<Value> + Copy>(v: Option<T>) -> Value {
    v.map_or(Value::Null, Into::into)
}

impl RunConfig {
    /// Sets one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "paths.interactions" => self.interactions = opt(v, || as_path(key, v))?,
            "paths.categories" => self.categories = opt(v, || as_path(key, v))?,
            "paths.output" => self.output = as_path(key, v)?,
            "ingest.multi_category" => self.multi_category = as_bool(key, v)?,
            "seed" => self.seed = as_u64(key, v)?,
            "split.train" => self.split_ratios[0] = as_f64(key, v)?,
            "split.val" => self.split_ratios[1] = as_f64(key, v)?,
            "split.test" => self.split_ratios[2] = as_f64(key, v)?,
            "split.seed" => self.split_seed = opt(v, || as_u64(key, v))?,
            "eval.ks" => {
                let arr = v.as_array().ok_or_else(|| bad(key, v, "an array of integers"))?;
                self.ks = arr.iter().map(|x| as_usize(key, x)).collect::<Result<_>>()?;
            }
            "eval.standard_recall" => self.standard_recall = as_bool(key, v)?,
            "eval.per_user" => self.per_user = as_bool(key, v)?,
            "walk.views" => self.walk_views = as_usize(key, v)?,
            "walk.steps" => self.walk_steps = as_usize(key, v)?,
            "walk.restart" => self.walk_restart = as_f64(key, v)?,
            "walk.min_vertices" => self.walk_min_vertices = as_usize(key, v)?,
            "walk.max_attempts" => self.walk_max_attempts = opt(v, || as_usize(key, v))?,
            "walk.users_only" => self.walk_users_only = as_bool(key, v)?,
            "walk.seed" => self.walk_seed = opt(v, || as_u64(key, v))?,
            "completion.rho" => self.completion_rho = as_f64(key, v)?,
            "completion.k_clusters" => self.completion_k_clusters = opt(v, || as_usize(key, v))?,
            "completion.seed" => self.completion_seed = opt(v, || as_u64(key, v))?,
            "model.dim" => self.model_dim = as_usize(key, v)?,
            "model.layers" => self.model_layers = as_usize(key, v)?,
            "model.seed" => self.model_seed = opt(v, || as_u64(key, v))?,
            "train.learning_rate" => self.learning_rate = as_f64(key, v)?,
            "train.lambda" => self.lambda = as_f64(key, v)?,
            "train.epochs" => self.epochs = as_usize(key, v)?,
            "train.batch_size" => self.batch_size = as_usize(key, v)?,
            "train.patience" => self.patience = opt(v, || as_usize(key, v))?,
            "train.negatives_per_positive" => self.negatives_per_positive = as_usize(key, v)?,
            "train.raw_logit_bpr" => self.raw_logit_bpr = as_bool(key, v)?,
            "train.resample_views" => self.resample_views = as_bool(key, v)?,
            "train.seed" => self.train_seed = opt(v, || as_u64(key, v))?,
            "run.threads" => self.threads = opt(v, || as_usize(key, v))?,
            "run.repeats" => self.repeats = as_usize(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Sets a key from command-line or environment text. The text is read
    /// as JSON when it parses, otherwise as a plain string.
    pub fn set_str(&mut self, key: &str, text: &str) -> Result<()> {
        let v = serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()));
        self.set(key, &v)
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        let v = match key {
            "paths.interactions" => path_value(&self.interactions),
            "paths.categories" => path_value(&self.categories),
            "paths.output" => Value::String(self.output.display().to_string()),
            "ingest.multi_category" => self.multi_category.into(),
            "seed" => self.seed.into(),
            "split.train" => self.split_ratios[0].into(),
            "split.val" => self.split_ratios[1].into(),
            "split.test" => self.split_ratios[2].into(),
            "split.seed" => opt_value(self.split_seed),
            "eval.ks" => self.ks.clone().into(),
            "eval.standard_recall" => self.standard_recall.into(),
            "eval.per_user" => self.per_user.into(),
            "walk.views" => self.walk_views.into(),
            "walk.steps" => self.walk_steps.into(),
            "walk.restart" => self.walk_restart.into(),
            "walk.min_vertices" => self.walk_min_vertices.into(),
            "walk.max_attempts" => opt_value(self.walk_max_attempts),
            "walk.users_only" => self.walk_users_only.into(),
            "walk.seed" => opt_value(self.walk_seed),
            "completion.rho" => self.completion_rho.into(),
            "completion.k_clusters" => opt_value(self.completion_k_clusters),
            "completion.seed" => opt_value(self.completion_seed),
            "model.dim" => self.model_dim.into(),
            "model.layers" => self.model_layers.into(),
            "model.seed" => opt_value(self.model_seed),
            "train.learning_rate" => self.learning_rate.into(),
            "train.lambda" => self.lambda.into(),
            "train.epochs" => self.epochs.into(),
            "train.batch_size" => self.batch_size.into(),
            "train.patience" => opt_value(self.patience),
            "train.negatives_per_positive" => self.negatives_per_positive.into(),
            "train.raw_logit_bpr" => self.raw_logit_bpr.into(),
            "train.resample_views" => self.resample_views.into(),
            "train.seed" => opt_value(self.train_seed),
            "run.threads" => opt_value(self.threads),
            "run.repeats" => self.repeats.into(),
            _ => return None,
        };
        Some(v)
    }

    pub fn to_flat(&self) -> Map<String, Value> {
        KEYS.iter().map(|k| (k.to_string(), self.get(k).expect("known key"))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&Value::Object(self.to_flat())).expect("serializable")
    }

    /// Applies every key of a flat JSON object on top of `self`.
    pub fn merge_json(&mut self, text: &str) -> Result<()> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let obj = v.as_object().ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        for (k, v) in obj {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.merge_json(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn env_name(key: &str) -> String {
        format!("{ENV_PREFIX}{}", key.to_uppercase().replace('.', "_"))
    }

    /// Applies overrides from a variable lookup (normally the process
    /// environment).
    pub fn apply_env_from(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for key in KEYS {
            if let Some(text) = lookup(&Self::env_name(key)) {
                self.set_str(key, &text)?;
            }
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_env_from(|k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.split_ratios;
        if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must be positive and sum to 1, got {a}/{b}/{c}")));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config("eval.ks must list positive cutoffs".into()));
        }
        if !self.ks.contains(&10) {
            return Err(Error::Config("eval.ks must include 10 (used for validation)".into()));
        }
        if !(0.0..=1.0).contains(&self.completion_rho) {
            return Err(Error::Config(format!("completion.rho must lie in [0, 1], got {}", self.completion_rho)));
        }
        if self.completion_k_clusters == Some(0) {
            return Err(Error::Config("completion.k_clusters must be positive".into()));
        }
        if self.model_dim == 0 {
            return Err(Error::Config("model.dim must be positive".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("run.repeats must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("run.threads must be positive".into()));
        }
        self.walk_config(0).validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train_config(0).validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Fills every unset stage seed from the master seed.
    pub fn resolved(&self) -> RunConfig {
        let s = self.seed;
        RunConfig {
            split_seed: Some(self.split_seed.unwrap_or(s.wrapping_add(SPLIT_OFFSET))),
            completion_seed: Some(self.completion_seed.unwrap_or(s.wrapping_add(COMPLETION_OFFSET))),
            walk_seed: Some(self.walk_seed.unwrap_or(s.wrapping_add(WALK_OFFSET))),
            model_seed: Some(self.model_seed.unwrap_or(s.wrapping_add(MODEL_OFFSET))),
            train_seed: Some(self.train_seed.unwrap_or(s.wrapping_add(TRAIN_OFFSET))),
            ..self.clone()
        }
    }

    /// Configuration for repeat `r`: master seed advanced by `r`, stage
    /// seeds re-derived.
    pub fn for_repeat(&self, r: usize) -> RunConfig {
        RunConfig {
            seed: self.seed.wrapping_add(r as u64),
            split_seed: None,
            completion_seed: None,
            walk_seed: None,
            model_seed: None,
            train_seed: None,
            repeats: 1,
            ..self.clone()
        }
        .resolved()
    }

    pub fn split_seed(&self) -> u64 {
        self.resolved().split_seed.unwrap()
    }

    pub fn walk_config(&self, _n_vertices: usize) -> WalkConfig {
        WalkConfig {
            views: self.walk_views,
            steps: self.walk_steps,
            restart: self.walk_restart,
            min_vertices: self.walk_min_vertices,
            seed: self.resolved().walk_seed.unwrap(),
            max_attempts: self.walk_max_attempts,
            start: if self.walk_users_only { StartPolicy::UsersOnly } else { StartPolicy::AnyVertex },
        }
    }

    pub fn completion_config(&self) -> CompletionConfig {
        CompletionConfig {
            rho: self.completion_rho,
            k_clusters: self.completion_k_clusters,
            seed: self.resolved().completion_seed.unwrap(),
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { dim: self.model_dim, layers: self.model_layers, seed: self.resolved().model_seed.unwrap() }
    }

    pub fn train_config(&self, _: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            lambda: self.lambda,
            epochs: self.epochs,
            negatives_per_positive: self.negatives_per_positive,
            batch_size: self.batch_size,
            patience: self.patience,
            seed: self.resolved().train_seed.unwrap(),
            bpr_form: if self.raw_logit_bpr { BprForm::RawLogit } else { BprForm::SigmoidDifference },
            resample_views: self.resample_views,
        }
    }

    pub fn recall_mode(&self) -> RecallMode {
        if self.standard_recall {
            RecallMode::TruthDenominator
        } else {
            RecallMode::CutoffDenominator
        }
    }

    /// SHA-256 over the resolved result-affecting keys, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut flat = self.resolved().to_flat();
        for k in UNFINGERPRINTED {
            flat.remove(*k);
        }
        let digest = Sha256::digest(serde_json::to_string(&Value::Object(flat)).expect("serializable").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_protocol() {
        let c = RunConfig::default();
        assert_eq!(c.split_ratios, [0.8, 0.1, 0.1]);
        assert_eq!(c.ks, vec![5, 10, 15, 20]);
        assert_eq!((c.walk_views, c.walk_steps, c.walk_restart, c.walk_min_vertices), (5, 15, 0.1, 5));
        assert_eq!((c.model_dim, c.model_layers), (64, 2));
        assert_eq!((c.learning_rate, c.lambda), (0.001, 1e-5));
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let mut c = RunConfig::default();
        c.completion_rho = 0.0;
        c.completion_k_clusters = Some(4);
        c.interactions = Some("a.tsv".into());
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_ratios_and_keys() {
        let mut c = RunConfig::default();
        c.split_ratios = [0.8, 0.1, 0.2];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.split_ratios = [1.0, 0.0, 0.0];
        assert!(c.validate().is_err());
        assert!(RunConfig::from_json(r#"{"walk.bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"walk.steps": "x"}"#).is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = RunConfig::default();
        c.apply_env_from(|k| match k {
            "HGREC_COMPLETION_RHO" => Some("0.25".into()),
            "HGREC_PATHS_OUTPUT" => Some("/tmp/x".into()),
            "HGREC_EVAL_KS" => Some("[10]".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.completion_rho, 0.25);
        assert_eq!(c.output, PathBuf::from("/tmp/x"));
        assert_eq!(c.ks, vec![10]);
    }

    #[test]
    fn fingerprint_ignores_output_and_threads() {
        let a = RunConfig::default();
        let b = RunConfig { output: "elsewhere".into(), threads: Some(1), ..a.clone() };
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = RunConfig { completion_rho: 0.0, ..a.clone() };
        assert_ne!(a.fingerprint(), c.fingerprint());
        // explicit stage seeds equal to the derived ones do not change it
        assert_eq!(a.fingerprint(), a.resolved().fingerprint());
    }
}

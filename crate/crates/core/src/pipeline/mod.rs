//! Configuration, splitting, synthetic data and the end-to-end run.

pub mod config;
pub mod run;
pub mod split;
pub mod synth;

pub use config::RunConfig;
pub use run::{run_on_dataset, run_pipeline, Dataset, PipelineError, RunArtifacts, Stage};
pub use split::{split, SplitBundle};
pub use synth::{generate_synthetic, SyntheticConfig, SyntheticData};

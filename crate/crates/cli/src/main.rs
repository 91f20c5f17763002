use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hgrec::pipeline::run::{self, PipelineError};
use hgrec::pipeline::{generate_synthetic, run_pipeline, RunConfig, SyntheticConfig};
use hgrec::Error;

#[derive(Parser)]
#[command(name = "hgrec", version, about = "Hypergraph recommender pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat JSON config file with dotted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set completion.rho=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output / working directory.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Worker threads; 1 gives the fully deterministic mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr (-vv for debug).
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Read interaction and category TSVs into the output directory.
    Ingest(Inputs),
    /// Write a synthetic clustered dataset.
    Synth(Synth),
    /// Split ingested interactions into train/val/test.
    Split,
    /// Build the hypergraph from the training split.
    Build,
    /// Add cluster-derived hyperedges.
    Complete,
    /// Sample random-walk views of the completed hypergraph.
    Sample,
    /// Train the model and write a checkpoint.
    Train,
    /// Evaluate the checkpoint on the test split.
    Eval,
    /// Run every stage end to end.
    Run(RunArgs),
    /// Run the built-in correctness checks.
    Check,
    /// Print the resolved configuration as JSON.
    Config,
}

#[derive(Args)]
struct Inputs {
    /// `user<TAB>item[<TAB>timestamp]` lines.
    #[arg(long)]
    interactions: Option<PathBuf>,
    /// `item<TAB>category` lines.
    #[arg(long)]
    categories: Option<PathBuf>,
}

#[derive(Args)]
struct Synth {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 300)]
    items: usize,
    #[arg(long, default_value_t = 6)]
    categories: usize,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long, default_value_t = 0.05)]
    density: f64,
    #[arg(long, default_value_t = 0.9)]
    concentration: f64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Independent reseeded runs; writes repeat_<r>/ and summary.csv.
    #[arg(long)]
    repeats: Option<usize>,
    /// Replay the configuration recorded in a previous run's manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn config_error(e: Error) -> PipelineError {
    PipelineError { stage: run::Stage::Config, source: e }
}

/// Defaults, then the config file or manifest, then `HGREC_*` variables,
/// then `--set`, then explicit flags.
fn resolve(common: &Common, manifest: Option<&PathBuf>, inputs: Option<&Inputs>, repeats: Option<usize>) -> Result<RunConfig, PipelineError> {
    let mut cfg = match (manifest, &common.config) {
        (Some(m), _) => {
            let text = std::fs::read_to_string(m).map_err(|e| config_error(Error::Config(format!("{}: {e}", m.display()))))?;
            run::config_from_manifest(&text).map_err(config_error)?
        }
        (None, Some(path)) => RunConfig::load(path).map_err(config_error)?,
        (None, None) => RunConfig::default(),
    };
    cfg.apply_env().map_err(config_error)?;
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| config_error(Error::Config(format!("--set expects KEY=VALUE, got {kv:?}"))))?;
        cfg.set_str(k.trim(), v.trim()).map_err(config_error)?;
    }
    if let Some(o) = &common.output {
        cfg.output = o.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(i) = inputs {
        if i.interactions.is_some() {
            cfg.interactions = i.interactions.clone();
        }
        if i.categories.is_some() {
            cfg.categories = i.categories.clone();
        }
    }
    if let Some(r) = repeats {
        cfg.repeats = r;
    }
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

fn configure_threads(cfg: &RunConfig) -> Result<(), PipelineError> {
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_error(Error::Config(format!("thread pool: {e}"))))?;
    }
    Ok(())
}

fn synth(common: &Common, s: &Synth) -> Result<(), PipelineError> {
    let dir = common.output.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
    let cfg = SyntheticConfig {
        n_users: s.users,
        n_items: s.items,
        n_categories: s.categories,
        n_clusters: s.clusters,
        density: s.density,
        concentration: s.concentration,
        seed: common.seed.unwrap_or(0),
    };
    let data = generate_synthetic(&cfg).map_err(config_error)?;
    let write = |name: &str, text: String| {
        hgrec::io::write_text(&dir.join(name), &text).map_err(|source| PipelineError { stage: run::Stage::Write, source })
    };
    write("interactions.tsv", data.interactions_tsv())?;
    write("categories.tsv", data.categories_tsv())?;
    write("labels.tsv", data.labels_tsv())?;
    println!(
        "wrote {} interactions to {} (densified {} users, {} items)",
        data.records.len(),
        dir.display(),
        data.densified_users,
        data.densified_items
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let common = &cli.common;
    match &cli.command {
        Command::Synth(s) => return synth(common, s),
        Command::Check => {
            let results = hgrec::check::run_checks();
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!("{:<28} {}  {}", r.name, if r.passed { "ok" } else { "FAILED" }, r.detail);
            }
            if failed > 0 {
                return Err(PipelineError {
                    stage: run::Stage::Evaluate,
                    source: Error::Evaluation(format!("{failed} checks failed")),
                });
            }
            return Ok(());
        }
        _ => {}
    }
    let cfg = match &cli.command {
        Command::Ingest(i) => resolve(common, None, Some(i), None)?,
        Command::Run(r) => resolve(common, r.manifest.as_ref(), Some(&r.inputs), r.repeats)?,
        _ => resolve(common, None, None, None)?,
    };
    configure_threads(&cfg)?;
    match &cli.command {
        Command::Config => println!("{}", cfg.to_json()),
        Command::Ingest(_) => {
            let ds = run::stage_ingest(&cfg)?;
            println!(
                "{} users, {} items, {} categories, {} interactions",
                ds.ids.users.len(),
                ds.ids.items.len(),
                ds.ids.categories.len(),
                ds.full.edges().len()
            );
        }
        Command::Split => {
            let sp = run::stage_split(&cfg)?;
            println!("train {}, val {}, test {}", sp.train.len(), sp.validation.len(), sp.test.len());
        }
        Command::Build => println!("{} hyperedges", run::stage_build(&cfg)?.n_hyperedges()),
        Command::Complete => {
            let c = run::stage_complete(&cfg)?;
            println!("{} users sampled, {} hyperedges added", c.sampled_users.len(), c.added.len());
        }
        Command::Sample => {
            let v = run::stage_sample(&cfg)?;
            println!("{} views from {} walks", v.views.len(), v.attempts);
        }
        Command::Train => {
            let o = run::stage_train(&cfg)?;
            println!("{} epochs, best epoch {}", o.history.len(), o.best_epoch);
        }
        Command::Eval => print!("{}", run::stage_eval(&cfg)?.to_table()),
        Command::Run(_) => {
            let runs = run_pipeline(&cfg)?;
            for (r, a) in runs.iter().enumerate() {
                if runs.len() > 1 {
                    println!("repeat {r} (seed {})", a.config.seed);
                }
                print!("{}", a.report.to_table());
            }
            println!("artifacts in {}", cfg.output.display());
        }
        Command::Synth(_) | Command::Check => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

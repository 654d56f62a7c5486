//! Batch front end: every stage of the lab as a subcommand, plus `pipeline`
//! (all stages at once) and `crossnode` (a supervised model moved between
//! two simulated nodes).
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 pipeline.

mod commands;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{cell_file, pct, pipeline_files};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Pipeline(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "origintrace", version, about = "Origin detection of transactions from probe traffic")]
pub struct Cli {
    /// Configuration file with `[section]` headers and `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; required by stochastic subcommands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Configuration override, `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the network; write the full trace, one trace per coverage,
    /// ground truth and chain data.
    Simulate {
        /// Repeat index selecting the probe subsample.
        #[arg(long, default_value_t = 0)]
        repeat: usize,
    },
    /// Aggregate a trace into per-transaction features.
    Extract {
        /// Trace file written by `simulate`.
        #[arg(long)]
        trace: PathBuf,
        /// Ground truth, needed to stratify folds.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Split into this many folds and write one train/test pair.
        #[arg(long, requires = "truth")]
        folds: Option<usize>,
        /// Fold held out as the test set.
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Repeat index; with the seed it fixes the fold assignment.
        #[arg(long, default_value_t = 0)]
        repeat: usize,
    },
    /// Score feature rows with the unsupervised detectors.
    Detect {
        /// Feature CSV written by `extract`.
        #[arg(long)]
        features: PathBuf,
        /// `iforest`, `autoencoder`, `ocsvm` or `all`.
        #[arg(long, default_value = "all")]
        detector: String,
    },
    /// Pseudo-label training rows and fit the classifier.
    Train {
        /// Training feature CSV.
        #[arg(long)]
        features: PathBuf,
        /// Derive the pipeline seed of this fold and repeat.
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long, default_value_t = 0)]
        repeat: usize,
    },
    /// Classify test rows with a trained model.
    Predict {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Test feature CSV.
        #[arg(long)]
        features: PathBuf,
        /// Training rows; needed when the test score reuses the training forest.
        #[arg(long)]
        train_features: Option<PathBuf>,
        /// Derive the pipeline seed of this fold and repeat.
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long, default_value_t = 0)]
        repeat: usize,
    },
    /// Multi-input clustering with time-window sessions.
    Cluster {
        /// Chain file written by `simulate`.
        #[arg(long)]
        chain: PathBuf,
    },
    /// Majority-vote correction of predictions inside clusters.
    Collab {
        /// Predictions to correct, usually pooled over all folds.
        #[arg(long)]
        predictions: PathBuf,
        /// Cluster file written by `cluster`.
        #[arg(long)]
        clusters: PathBuf,
    },
    /// Score prediction files against ground truth; one run per file.
    Eval {
        #[arg(long, required = true, num_args = 1..)]
        predictions: Vec<PathBuf>,
        /// Ground truth written by `simulate`.
        #[arg(long)]
        truth: PathBuf,
        /// Method label for the report line.
        #[arg(long, default_value = "ntssl")]
        method: String,
        /// Coverage label for the report line.
        #[arg(long, default_value_t = 1.0)]
        coverage: f64,
    },
    /// Simulate, extract, classify, cluster, correct and report.
    Pipeline,
    /// Train on node A, test on node B, and compare with training on node B.
    Crossnode {
        /// Probe coverage used on both nodes.
        #[arg(long, default_value_t = 1.0)]
        coverage: f64,
    },
}

impl Command {
    fn needs_seed(&self) -> bool {
        match self {
            Command::Extract { folds, .. } => folds.is_some(),
            Command::Cluster { .. } | Command::Collab { .. } | Command::Eval { .. } => false,
            _ => true,
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).format_target(false).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.command.needs_seed() && cli.seed.is_none() {
        return Err(CliError::Usage("this subcommand is stochastic; pass --seed <u64>".into()));
    }
    let seed = cli.seed.unwrap_or(0);
    let settings = settings::Settings::load(cli.config.as_deref(), &cli.overrides, seed)
        .map_err(|e| CliError::Usage(format!("configuration: {e}")))?;
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Data(format!("{}: {e}", cli.out.display())))?;
    commands::dispatch(cli, &settings, seed)
}

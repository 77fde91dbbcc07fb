//! Command-line driver. Every stage reads its inputs by path, writes its
//! outputs atomically with a `.meta` lineage sidecar, and can be re-run
//! independently, so external predictions can join at the ensemble stage.
//!
//! Exit codes: 0 success, 2 argument error, 3 data error, 4 solver
//! non-convergence under `--strict`.

mod artifact;
mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::error::GeoError;

pub use artifact::{meta_path, Meta, WorkLock, LOCK_FILE, STAGE_VERSION};
pub use config::{Config, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] GeoError),
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(e) => match root_cause(e) {
                GeoError::InvalidArgument(_) => 2,
                _ => 3,
            },
            CliError::NotConverged(_) => 4,
        }
    }
}

fn root_cause(mut e: &GeoError) -> &GeoError {
    loop {
        match e {
            GeoError::File { source, .. }
            | GeoError::Fold { source, .. }
            | GeoError::GridCell { source, .. } => e = source,
            other => return other,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "geostack",
    version,
    about = "Geolocation of short texts with string kernels, nu-SVR and boosted stacking"
)]
pub struct Cli {
    /// Flat `key = value` file; flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Exit with status 4 when a solver stops before converging.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Suppress progress and timing messages on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Validate corpus files, optionally merging or splitting them.
    Ingest(IngestArgs),
    /// Compute a Gram matrix, or a cross matrix with --test.
    Kernel(KernelArgs),
    /// Train and apply nu-SVR models.
    #[command(subcommand)]
    Svr(SvrCommand),
    /// Search C and nu on a dev corpus, per coordinate.
    Gridsearch(GridArgs),
    /// Train and apply the stacked booster.
    #[command(subcommand)]
    Ensemble(EnsembleCommand),
    /// Score a prediction set against a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Predict the median training location for every post.
    Baseline(BaselineArgs),
    /// Run every stage end to end in a work directory.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub regions: Option<usize>,
    #[arg(long = "per-region")]
    pub per_region: Option<usize>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub bias: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input corpora; several are concatenated with fresh ids.
    #[arg(long = "input")]
    pub input: Vec<PathBuf>,
    /// train, dev or test.
    #[arg(long)]
    pub role: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fraction kept in --out; the rest goes to --split-out.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long = "split-out")]
    pub split_out: Option<PathBuf>,
    #[arg(long = "split-role")]
    pub split_role: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct KernelOpts {
    /// Blended n-gram lengths as MIN:MAX.
    #[arg(long = "ngram-range")]
    pub ngram_range: Option<String>,
    /// Cosine-normalize kernel values (true or false).
    #[arg(long)]
    pub normalize: Option<bool>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Rows of a cross matrix against --train.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelOpts,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SvrOpts {
    #[arg(long = "svr-c")]
    pub svr_c: Option<f64>,
    #[arg(long = "svr-nu")]
    pub svr_nu: Option<f64>,
    #[arg(long = "svr-c-lat")]
    pub svr_c_lat: Option<f64>,
    #[arg(long = "svr-nu-lat")]
    pub svr_nu_lat: Option<f64>,
    #[arg(long = "svr-c-lon")]
    pub svr_c_lon: Option<f64>,
    #[arg(long = "svr-nu-lon")]
    pub svr_nu_lon: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-passes")]
    pub max_passes: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum SvrCommand {
    /// Fit latitude and longitude models on a precomputed Gram matrix.
    Train(SvrTrainArgs),
    /// Apply a model pair to a precomputed cross matrix.
    Predict(SvrPredictArgs),
    /// Out-of-fold predictions on a labeled corpus.
    Oof(SvrOofArgs),
}

#[derive(Debug, Args)]
pub struct SvrTrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub svr: SvrOpts,
}

#[derive(Debug, Args)]
pub struct SvrPredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Model name written to the prediction header.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SvrOofArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub kernel: KernelOpts,
    #[command(flatten)]
    pub svr: SvrOpts,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Report destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Writes the winning parameters as a config file.
    #[arg(long = "best-out")]
    pub best_out: Option<PathBuf>,
    /// Comma-separated C values.
    #[arg(long = "c-values")]
    pub c_values: Option<String>,
    /// Comma-separated nu values.
    #[arg(long = "nu-values")]
    pub nu_values: Option<String>,
    /// mse, mae or median-km.
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-passes")]
    pub max_passes: Option<usize>,
    #[command(flatten)]
    pub kernel: KernelOpts,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GbtOpts {
    /// `reference` (100 trees of depth 10 for latitude, 1000 of depth 20 for
    /// longitude) or `default` (100 trees of depth 6 for both).
    #[arg(long = "gbt-preset")]
    pub gbt_preset: Option<String>,
    #[arg(long = "lat-estimators")]
    pub lat_estimators: Option<usize>,
    #[arg(long = "lat-depth")]
    pub lat_depth: Option<usize>,
    #[arg(long = "lon-estimators")]
    pub lon_estimators: Option<usize>,
    #[arg(long = "lon-depth")]
    pub lon_depth: Option<usize>,
    #[arg(long = "learning-rate")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub colsample: Option<f64>,
    #[arg(long = "min-child-weight")]
    pub min_child_weight: Option<f64>,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum EnsembleCommand {
    /// Train the per-coordinate boosters on base-model predictions.
    Train(EnsembleTrainArgs),
    /// Combine base-model predictions with a trained booster pair.
    Predict(EnsemblePredictArgs),
}

#[derive(Debug, Args)]
pub struct EnsembleTrainArgs {
    /// kfold: meta-train on out-of-fold predictions over --corpus (the
    /// training corpus). holdout: meta-train on predictions for --corpus
    /// (the dev corpus) from models fit on --train.
    #[arg(long)]
    pub mode: Option<String>,
    /// Labeled corpus the meta-learner is trained on.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Training corpus for the built-in SVR in holdout mode.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// External base-model predictions covering --corpus.
    #[arg(long = "pred")]
    pub pred: Vec<PathBuf>,
    /// Add the built-in string-kernel SVR (named `svr`) as a base model.
    #[arg(long = "internal-svr")]
    pub internal_svr: Option<bool>,
    /// Where to write the built-in SVR's meta-training predictions.
    #[arg(long = "base-out")]
    pub base_out: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelOpts,
    #[command(flatten)]
    pub svr: SvrOpts,
    #[command(flatten)]
    pub gbt: GbtOpts,
}

#[derive(Debug, Args)]
pub struct EnsemblePredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long = "pred")]
    pub pred: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Labeled reference corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Summary destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-post `id<TAB>distance_km` file.
    #[arg(long = "per-post")]
    pub per_post: Option<PathBuf>,
    /// Sorted distance curve as `rank<TAB>distance_km`.
    #[arg(long = "plot-data")]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Posts to predict.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long = "work-dir")]
    pub work_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Comma-separated MIN:MAX ranges; one SVR base model per range.
    #[arg(long = "ngram-ranges")]
    pub ngram_ranges: Option<String>,
    #[arg(long)]
    pub normalize: Option<bool>,
    /// Refit base models and booster on train+dev before predicting --test.
    #[arg(long = "retrain-final")]
    pub retrain_final: bool,
    #[command(flatten)]
    pub svr: SvrOpts,
    #[command(flatten)]
    pub gbt: GbtOpts,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("geostack: {e}");
            e.exit_code()
        }
    }
}

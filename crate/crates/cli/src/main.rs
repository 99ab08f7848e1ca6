//! Command-line pipeline around the cwsynth library: pre-train the
//! one-vs-all classifiers, fit the two-step generator, sample synthetic
//! data, score it against the real data, and dump latent projections.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cwsynth::error::Error;

#[derive(Parser)]
#[command(
    name = "cwsynth",
    about = "Two-step generative modeling and evaluation for categorical tabular data",
    version
)]
struct Cli {
    /// Seed driving every stage of the invoked command. Overrides the
    /// config file's `seed`; defaults to 0 when neither is given.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// TOML config file; command-line flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Treat the first CSV row as data instead of a header.
    #[arg(long, global = true)]
    no_header: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train the per-column one-vs-all classifiers and persist them.
    PretrainClassifiers {
        /// Training CSV.
        #[arg(long)]
        data: PathBuf,
        /// Output directory (bank.weights, schema.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Step 1 (encoder/decoder) then step 2 (prior) on a dataset.
    Fit {
        /// Training CSV.
        #[arg(long)]
        data: PathBuf,
        /// Held-out CSV for the posterior-variance diagnostic.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Pre-trained classifier bank (required when gamma > 0).
        #[arg(long)]
        classifier_bank: Option<PathBuf>,
        /// Output directory (model.weights, prior.weights, schema.json,
        /// train_report.json, loss_trace.csv).
        #[arg(long)]
        out: PathBuf,
        /// Cramer-Wold weight; overrides the config file.
        #[arg(long)]
        lambda: Option<f64>,
        /// Classification-loss weight; overrides the config file.
        #[arg(long)]
        gamma: Option<f64>,
        /// Latent dimension; overrides the config file.
        #[arg(long)]
        latent_dim: Option<usize>,
        /// Disable the entropy regularization term (ablation switch).
        #[arg(long)]
        no_entropy_reg: bool,
    },
    /// Draw synthetic rows from a fitted model and prior.
    Sample {
        /// Model weights from `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Prior weights from `fit`.
        #[arg(long)]
        prior: PathBuf,
        /// Schema sidecar from `fit`.
        #[arg(long)]
        schema: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Row count; defaults to the training-set size recorded in the
        /// model file.
        #[arg(long)]
        count: Option<usize>,
        /// Use per-block argmax instead of sampling levels.
        #[arg(long)]
        argmax: bool,
    },
    /// Score one or more synthetic datasets against real train/test data.
    Evaluate {
        /// Real training CSV (defines the schema).
        #[arg(long)]
        data: PathBuf,
        /// Real held-out CSV.
        #[arg(long)]
        test: PathBuf,
        /// Synthetic CSV; repeat to rank several systems.
        #[arg(long, required = true)]
        synth: Vec<PathBuf>,
        /// Output directory (report.json, report.csv).
        #[arg(long)]
        out: PathBuf,
        /// Also dump marginal PMF overlays for plotting.
        #[arg(long)]
        plot_data: bool,
    },
    /// PCA-projected aggregated-posterior samples, as CSV.
    LatentDump {
        /// Dataset CSV to encode.
        #[arg(long)]
        data: PathBuf,
        /// Model weights from `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Schema sidecar from `fit`.
        #[arg(long)]
        schema: PathBuf,
        /// Output CSV with pc1, pc2 columns.
        #[arg(long)]
        out: PathBuf,
        /// Posterior draws per row.
        #[arg(long, default_value_t = 1)]
        draws: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap treats --help/--version as errors that print to stdout
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// 0 success, 1 usage, 2 data error, 3 numeric failure.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) => 1,
        Error::Io { .. }
        | Error::Data { .. }
        | Error::SchemaMismatch(_)
        | Error::ShapeMismatch(_)
        | Error::Persist(_) => 2,
        Error::Numeric(_) => 3,
    }
}

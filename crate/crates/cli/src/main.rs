//! `logicnet` command-line tool.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

pub const THREADS_ENV: &str = "LOGICNET_THREADS";

#[derive(Parser, Debug)]
#[command(name = "logicnet", version, about = "Train, explain and prune logic gate networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (TOML with [train], [explain], [switchdist], [prune]).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `train.seed`, which also fixes the data split.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory with the MNIST IDX files.
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a relaxed network and write soft and discretized models.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace every gate mixture by its most likely gate.
    Discretize {
        #[arg(long)]
        model: PathBuf,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a saliency map for a test sample or a class.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// L_E, L_A, G_null, G_U, G_E, G_A, C_E or C_A.
        #[arg(long)]
        variant: String,
        /// Test-split sample index (local variants).
        #[arg(long)]
        sample: Option<usize>,
        /// Class id (global and class variants).
        #[arg(long)]
        class: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Switch-distance evaluation over true-positive test samples.
    EvalSwitchdist {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated: random, vg, ig and explanation variants.
        #[arg(long, default_value = "random,vg,ig,L_E,L_A,G_U,G_E,G_A,C_E,C_A")]
        methods: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut single-class MiniNets from a discretized model.
    Prune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Class id or `all`.
        #[arg(long, default_value = "all")]
        class: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time MiniNets against their parent.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "all")]
        class: String,
        /// Timing repetitions (at least 30); overrides `prune.repetitions`.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print netlist statistics and the gate-type histogram.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    if n == 0 {
        return Err(CliError::Usage(format!("{THREADS_ENV} must be positive")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Train { common, out } => commands::train(&common, &out),
        Command::Discretize { model, out } => commands::discretize(&model, &out),
        Command::Explain {
            common,
            model,
            variant,
            sample,
            class,
            out,
        } => commands::explain(&common, &model, &variant, sample, class, &out),
        Command::EvalSwitchdist {
            common,
            model,
            methods,
            out,
        } => commands::eval_switchdist(&common, &model, &methods, &out),
        Command::Prune {
            common,
            model,
            class,
            out,
        } => commands::prune(&common, &model, &class, &out),
        Command::Bench {
            common,
            model,
            class,
            reps,
            out,
        } => commands::bench(&common, &model, &class, reps, &out),
        Command::Inspect { model } => commands::inspect(&model),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

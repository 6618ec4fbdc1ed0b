//! `tlx`: fit, apply and analyse time-localized cluster explanations.
//!
//! Exit codes: 0 success, 1 I/O failure on outputs, 2 configuration or usage
//! error (including missing input paths), 3 malformed data, 4 numerical
//! failure.

mod commands;
mod config;
mod data;
mod error;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "tlx", version, about = "Time-localized cluster explanations for 1D ECG networks")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, env = "TLX_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed, replacing every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for record-level parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Network weights (TLXW).
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// A record file or a directory of records.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic corpus and a toy bundle fitted to it.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of records.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit an explainer on a corpus and save it as TLXC.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Number of clusters.
        #[arg(short, long)]
        k: Option<usize>,
    },
    /// Explain records; writes explanation JSON and optional stacked-beat SVGs.
    Explain {
        #[command(flatten)]
        common: Common,
        /// Fitted explainer (TLXC).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
        /// Omit the soft-assignment matrix from the JSON.
        #[arg(long)]
        no_probs: bool,
    },
    /// Correlations, keypoint frequencies, uncertainty by phase and Grad-CAM comparison.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Forests on cluster proportions against forests on the signal.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Training-set size and cluster-count grids.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Evaluation records; defaults to the fitting pool.
        #[arg(long)]
        eval: Option<PathBuf>,
    },
    /// Grad-CAM saliency maps as JSON and SVG.
    Gradcam {
        #[command(flatten)]
        common: Common,
        /// Head output to explain; defaults to the top-scoring one.
        #[arg(long)]
        target: Option<usize>,
        /// Layer to take gradients at.
        #[arg(long)]
        tap: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Command::Fit { k: Some(k), .. } = &cli.command {
        cfg.k = Some(*k);
    }
    if let Command::Synth { n: Some(n), .. } = &cli.command {
        cfg.synth.n_records = *n;
    }
    if let Command::Gradcam { target, tap, .. } = &cli.command {
        if target.is_some() {
            cfg.gradcam.target = *target;
        }
        if tap.is_some() {
            cfg.gradcam.tap = tap.clone();
        }
    }
    let cfg = cfg.resolve()?;
    if let Some(jobs) = cfg.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match cli.command {
        Command::Synth { out, .. } => commands::synth(&cfg, out),
        Command::Fit { common, .. } => commands::fit(&cfg, common),
        Command::Explain {
            common,
            model,
            svg,
            no_probs,
        } => commands::explain(&cfg, common, model, svg, !no_probs && cfg.include_probs),
        Command::Analyze { common, model } => commands::analyze(&cfg, common, model),
        Command::Bench { common, model } => commands::bench(&cfg, common, model),
        Command::Ablate { common, eval } => commands::ablate(&cfg, common, eval),
        Command::Gradcam { common, .. } => commands::gradcam(&cfg, common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tlx: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! Experiment orchestration CLI.
//!
//! Exit codes: 0 = pass, 1 = assertion failure, 2 = configuration error,
//! 3 = numerical anomaly.

mod config;
mod ledger;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{emit_defaults, ExperimentConfig, ExperimentKind};
use run::{validate_only, Runner};

#[derive(Parser)]
#[command(name = "homog-lab", about = "Front propagation experiments in random media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the worker count (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a config and check the environment hypotheses.
    Validate { config: PathBuf },
    /// Print a default config for an experiment kind.
    EmitDefaults { kind: String },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, workers, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| anyhow::anyhow!("reading config {}: {e}", config.display()))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(o) = out {
                cfg.out_dir = o.to_string_lossy().into_owned();
            }
            if cfg.workers > 0 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.workers)
                    .build_global()
                    .ok();
            }
            let mut runner = Runner::new(cfg)?;
            let outcome = runner.run()?;
            Ok(outcome.exit_code())
        }
        Command::Validate { config } => {
            let outcome = validate_only(&config)?;
            Ok(outcome.exit_code())
        }
        Command::EmitDefaults { kind } => {
            let kind = match kind.as_str() {
                "validate_env" => ExperimentKind::ValidateEnv,
                "speed_table" => ExperimentKind::SpeedTable,
                "wulff_shape" => ExperimentKind::WulffShape,
                "subadd_synthetic" => ExperimentKind::SubaddSynthetic,
                "sandwich" => ExperimentKind::Sandwich,
                "geq_limit" => ExperimentKind::GeqLimit,
                "full_pipeline" => ExperimentKind::FullPipeline,
                other => anyhow::bail!(
                    "unknown kind {other}; expected one of validate_env, speed_table, \
                     wulff_shape, subadd_synthetic, sandwich, geq_limit, full_pipeline"
                ),
            };
            print!("{}", emit_defaults(kind));
            Ok(0)
        }
    }
}

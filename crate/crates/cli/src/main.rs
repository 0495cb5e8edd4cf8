use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sis_cli::commands::{default_results_path, report_cmd, select_cmd, simulate_cmd, sweep_cmd};
use sis_cli::config::{ExperimentConfig, Method};
use sis_cli::{CliError, Result};

/// Sparse source imaging: simulate, select λ, sweep and report.
///
/// Logging is controlled by the SIS_LOG environment variable
/// (e.g. SIS_LOG=info).
#[derive(Parser)]
#[command(name = "sis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON). Defaults to the built-in scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a problem and write G, M, positions and the truth.
    Simulate(Common),
    /// Select λ with one method and write the estimate.
    Select {
        #[command(flatten)]
        common: Common,
        /// Overrides `method` in the configuration.
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
    },
    /// Run every method over amplitudes × seeds and write results.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarize results.csv into summary.json and table.csv.
    Report {
        #[command(flatten)]
        common: Common,
        /// Sweep results (default: <out>/results.csv).
        #[arg(long)]
        results: Option<PathBuf>,
        /// Only summarize rows at this amplitude.
        #[arg(long)]
        amplitude: Option<f64>,
    },
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    match s {
        "sure" => Ok(Method::Sure),
        "cv" => Ok(Method::Cv),
        "lmap" => Ok(Method::Lmap),
        _ => Err(format!("unknown method {s:?} (expected sure, cv or lmap)")),
    }
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(common.seed, common.out.clone());
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = resolve(&common)?;
            simulate_cmd(&cfg, &cfg.out)
        }
        Command::Select { common, method } => {
            let mut cfg = resolve(&common)?;
            if method.is_some() {
                cfg.method = method;
            }
            select_cmd(&cfg, &cfg.out)
        }
        Command::Sweep { common, jobs } => {
            if jobs == 0 {
                return Err(CliError::Config("--jobs: must be >= 1".into()));
            }
            let cfg = resolve(&common)?;
            sweep_cmd(&cfg, &cfg.out, jobs)
        }
        Command::Report { common, results, amplitude } => {
            let cfg = resolve(&common)?;
            let results = results.unwrap_or_else(|| default_results_path(&cfg.out));
            report_cmd(Path::new(&results), &cfg.out, amplitude)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIS_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

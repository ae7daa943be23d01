use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use levyspec::harness::{run, run::write_error_report, ExperimentConfig, HarnessError, Mode};

/// Estimate the Blumenthal-Getoor index of a Levy process from simulated
/// increments or option quotes.
#[derive(Debug, Parser)]
#[command(name = "levyspec", version)]
struct Cli {
    /// What to run.
    #[arg(value_enum)]
    mode: Mode,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config (default: current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let fallback_out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((out, e)) => {
            eprintln!("levyspec: {e}");
            write_error_report(out.as_ref().unwrap_or(&fallback_out), &e);
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<(), (Option<PathBuf>, HarnessError)> {
    let mut config = ExperimentConfig::load(&cli.config).map_err(|e| (None, e))?;
    if let Some(m) = config.mode {
        if m != cli.mode {
            log::warn!("config mode {m:?} replaced by command-line mode {:?}", cli.mode);
        }
    }
    config.mode = Some(cli.mode);
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli.out.or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    config.out = Some(out.clone());
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| (Some(out.clone()), HarnessError::Config(format!("thread pool: {e}"))))?;
    }
    // `run` reports its own failures in errors.json.
    match run(&config, &out) {
        Ok(summary) => {
            println!("{} trials; wrote {}", summary.records.len(), summary.files.join(", "));
            Ok(())
        }
        Err(e) => {
            eprintln!("levyspec: {e}");
            std::process::exit(1);
        }
    }
}

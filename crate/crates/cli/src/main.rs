use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};
use tcrmdp::config::ExperimentConfig;
use tcrmdp::experiment::{self, Command};
use tcrmdp::Error;

/// Solve, train and evaluate time-constrained robust MDPs from a TOML config.
#[derive(Parser)]
#[command(name = "tcrmdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel backups and rollouts.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Compute a fixed point and extract policies.
    Solve,
    /// Alternating best-response training per observation class.
    Train,
    /// Run the evaluation protocols.
    Eval,
    /// Run the contraction and drift-bound property checks.
    Check,
}

fn write_all(dir: &Path, files: &experiment::Artifacts) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn run(cli: &Cli, out: &Path) -> Result<bool, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::from_file(path)?;
    let command = match cli.command {
        Cmd::Solve => Command::Solve,
        Cmd::Train => Command::Train,
        Cmd::Eval => Command::Eval,
        Cmd::Check => Command::Check,
    };
    info!("running {} with config hash {}", command.name(), cfg.hash());
    let outcome = experiment::run(command, &cfg)?;
    write_all(out, &outcome.artifacts).map_err(|e| Error::Config(format!("cannot write {}: {e}", out.display())))?;
    info!("wrote {} files to {}", outcome.artifacts.len(), out.display());
    Ok(outcome.passed)
}

fn output_dir(cli: &Cli) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    cli.config
        .as_ref()
        .and_then(|p| ExperimentConfig::from_file(p).ok())
        .and_then(|c| c.output)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            error!("cannot size the worker pool: {e}");
        }
    }
    let out = output_dir(&cli);
    match run(&cli, &out) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            error!("some checks failed; see {}", out.join("report.json").display());
            ExitCode::from(1)
        }
        Err(e) => {
            error!("{e}");
            let _ =
                fs::create_dir_all(&out).and_then(|_| fs::write(out.join("error.json"), experiment::error_json(&e)));
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

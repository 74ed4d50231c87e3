use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dk_sim::config::ExperimentConfig;
use dk_sim::experiments;
use dk_sim::DkError;
use serde::Serialize;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Simulate,
    Uniqueness,
    Ladder,
    Particles,
    Compare,
    KernelAudit,
    EntropyAudit,
}

/// Regularized Dean-Kawasaki experiments on the periodic torus.
#[derive(Debug, Parser)]
#[command(name = "dk-sim", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment config (a written manifest.toml also works).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides [output] dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Worker threads for replica fan-out.
    #[arg(long, env = "DK_SIM_THREADS")]
    threads: Option<usize>,
}

fn exit_code(e: &DkError) -> u8 {
    match e {
        DkError::Config(_) => 2,
        DkError::NumericalAbort { .. } => 3,
        _ => 1,
    }
}

fn emit<T: Serialize>(summary: &T) -> Result<(), DkError> {
    let line = serde_json::to_string(summary).map_err(|e| DkError::Format(e.to_string()))?;
    println!("{line}");
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), DkError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(DkError::config("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| DkError::invalid(e.to_string()))?;
    }
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        if i64::try_from(seed).is_err() {
            return Err(DkError::config("--seed must fit in a signed 64-bit integer"));
        }
        cfg.experiment.seed = seed;
    }
    if let Some(r) = cli.replicas {
        cfg.experiment.replicas = r;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = Some(out.clone());
    }
    let out = cfg.output_dir();
    eprintln!("config hash {}", cfg.hash());
    match cli.command {
        Command::Simulate => emit(&experiments::simulate(&cfg, &out)?),
        Command::Uniqueness => emit(&experiments::uniqueness(&cfg, &out)?),
        Command::Ladder => emit(&experiments::ladder(&cfg, &out)?),
        Command::Particles => emit(&experiments::run_particles(&cfg, &out)?),
        Command::Compare => emit(&experiments::compare(&cfg, &out)?),
        Command::KernelAudit => {
            let s = experiments::kernel_audit(&cfg, &out)?;
            eprintln!("{}", s.verdict);
            emit(&s)
        }
        Command::EntropyAudit => emit(&experiments::entropy_audit(&cfg, &out)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": exit_code(&e),
            });
            eprintln!("{record}");
            ExitCode::from(exit_code(&e))
        }
    }
}

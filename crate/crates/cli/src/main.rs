mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::Status;
use config::ExperimentConfig;
use output::OutDir;

/// Self-conformal IFS experiments: assumptions, pressure, Gibbs checks,
/// rotation orbits and projection dimensions.
#[derive(Parser, Debug)]
#[command(name = "confdim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSVs and manifest.json.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (all cores when absent).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Check (A0), (A1), distortion and (A2) for the configured system.
    Validate,
    /// Pressure of the configured potential and the Bowen root.
    Pressure,
    /// Gibbs sandwich and quasi-Bernoulli certificates.
    GibbsCheck,
    /// Entropy dimension of a sampled Gibbs cloud.
    Dimension,
    /// Rotation cocycle orbit and density diagnostics.
    Orbit,
    /// Haar averages E_q of normalized projected entropies.
    Eq,
    /// Entropy dimension of projections along a grid of directions.
    Sweep,
    /// Entropy dimension of the pin distance set.
    Distance,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Pressure => "pressure",
            Command::GibbsCheck => "gibbs-check",
            Command::Dimension => "dimension",
            Command::Orbit => "orbit",
            Command::Eq => "eq",
            Command::Sweep => "sweep",
            Command::Distance => "distance",
        }
    }
}

fn run(cli: &Cli) -> Result<Status> {
    let start = Instant::now();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    let path = cli.config.as_ref().context("--config is required")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let mut out = OutDir::create(&cli.out)?;
    let status = match cli.command {
        Command::Validate => commands::validate(&cfg, &mut out),
        Command::Pressure => commands::pressure_cmd(&cfg, &mut out),
        Command::GibbsCheck => commands::gibbs_check(&cfg, &mut out),
        Command::Dimension => commands::dimension(&cfg, &mut out),
        Command::Orbit => commands::orbit(&cfg, &mut out),
        Command::Eq => commands::eq(&cfg, &mut out),
        Command::Sweep => commands::sweep(&cfg, &mut out),
        Command::Distance => commands::distance(&cfg, &mut out),
    }?;
    let code = exit_code(status);
    out.manifest(cli.command.name(), &cfg.canonical_json()?, cfg.seed, start.elapsed().as_secs_f64(), code)?;
    Ok(status)
}

fn exit_code(status: Status) -> u8 {
    match status {
        Status::Passed => 0,
        Status::ChecksFailed => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CONFDIM_LOG", "warn")).init();
    // clap exits with 2 on usage errors, which is reserved for failed checks
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(status) => ExitCode::from(exit_code(status)),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

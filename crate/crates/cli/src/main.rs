//! `twoqubit`: trajectory ensembles, optimal paths and weak-coupling curves
//! for a monitored, noisy two-qubit system.

mod commands;
mod config;
mod error;
mod output;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twoqubit_core::ensemble::Backend;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

/// Environment variable with the default worker-thread count.
const THREADS_ENV: &str = "TWOQUBIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "twoqubit", version, about = "Monitored two-qubit entanglement under local noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; command-line flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory [default: out/<command>].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Trajectory backend: kraus or sde.
    #[arg(long, global = true, value_name = "BACKEND")]
    backend: Option<Backend>,
    /// Worker threads [default: $TWOQUBIT_THREADS, then all cores].
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Ensemble-averaged C²(t) for each noise strength.
    Simulate,
    /// Optimal path to a boundary target, with its action and classification.
    Optimal,
    /// Global-optimum curves over τ and the transition estimate.
    GlobalOpt,
    /// Linear and five-vertex approximations of C²(t).
    Diagram,
    /// Steady-state entanglement against noise strength.
    Sweep,
    /// Property checks of every component.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Optimal => "optimal",
            Self::GlobalOpt => "global-opt",
            Self::Diagram => "diagram",
            Self::Sweep => "sweep",
            Self::Validate => "validate",
        }
    }
}

fn env_threads() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Validation(format!("{THREADS_ENV} = `{v}` is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = cli.backend {
        cfg.backend = b;
    }
    if let Some(o) = cli.out {
        cfg.out = Some(o);
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if cfg.threads.is_none() {
        cfg.threads = env_threads()?;
    }
    let name = cli.command.name();
    cfg.validate_for(name)?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    let threads = rayon::current_num_threads();
    let root = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(name));
    let mut out = OutputDir::create(&root)?;
    let mut hard_failure = None;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut out)?,
        Command::Optimal => commands::optimal(&cfg, &mut out)?,
        Command::GlobalOpt => commands::global_opt(&cfg, &mut out)?,
        Command::Diagram => commands::diagram(&cfg, &mut out)?,
        Command::Sweep => commands::sweep(&cfg, &mut out)?,
        Command::Validate => {
            let report = validate::run(&cfg, &mut out)?;
            if !report.passed {
                hard_failure = Some(CliError::Numerical("validation checks failed".into()));
            }
        }
    }
    let manifest = out.finish(name, &cfg, threads)?;
    eprintln!("wrote {}", manifest.display());
    hard_failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

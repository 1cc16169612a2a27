use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use semctx_cli::{execute, BackendKind, Experiment, FileConfig, Overrides, RunConfig};
use semctx_core::icl::ScenarioId;
use semctx_core::presentation::ContextMode;

#[derive(Parser)]
#[command(name = "semctx", version, about = "Semantic-context bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static multi-context toy environment: SC-LinUCB vs one-hot LinUCB.
    Exp1(Flags),
    /// Four-phase continual environment with changing tools and queries.
    Exp2(Flags),
    /// In-context bandit scenarios played by a policy backend.
    Icl(Flags),
    /// Filter-reason-act tool selection over a catalog.
    Fireact(Flags),
}

#[derive(Args, Debug)]
struct Flags {
    /// JSON config file; flags take precedence over its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exploration weights, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    alpha: Option<Vec<f64>>,
    /// Runs per configuration (trials per scenario for icl).
    #[arg(long)]
    runs: Option<usize>,
    /// Horizon; for exp2 the total over four equal phases.
    #[arg(long)]
    t: Option<usize>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Ridge regularization.
    #[arg(long)]
    lambda: Option<f64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Context modes, comma separated (io, no, do, nd).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    mode: Option<Vec<ContextMode>>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Retrieval depth for fireact.
    #[arg(long)]
    k: Option<usize>,
    /// Run a single icl scenario (fQfA, mQfA, fQmA, mQmA).
    #[arg(long)]
    scenario: Option<ScenarioId>,
    /// Tool catalog (JSON lines) for fireact.
    #[arg(long, requires = "queries")]
    catalog: Option<PathBuf>,
    /// Queries (JSON lines with id and text) for fireact.
    #[arg(long, requires = "catalog")]
    queries: Option<PathBuf>,
}

fn run(experiment: Experiment, flags: Flags) -> Result<()> {
    let file = match &flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let overrides = Overrides {
        alpha: flags.alpha,
        runs: flags.runs,
        t: flags.t,
        seed: flags.seed,
        jobs: flags.jobs,
        out: flags.out,
        lambda: flags.lambda,
        modes: flags.mode,
        backend: flags.backend,
        k: flags.k,
        scenario: flags.scenario,
        catalog: flags.catalog,
        queries: flags.queries,
    };
    let cfg = RunConfig::resolve(experiment, file, overrides)?;
    let manifest = execute(&cfg)?;
    for (name, _) in &manifest.outputs {
        println!("{}", cfg.output_dir.join(name).display());
    }
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, flags) = match cli.command {
        Command::Exp1(f) => (Experiment::Exp1, f),
        Command::Exp2(f) => (Experiment::Exp2, f),
        Command::Icl(f) => (Experiment::Icl, f),
        Command::Fireact(f) => (Experiment::Fireact, f),
    };
    match run(experiment, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

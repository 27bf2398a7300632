use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plec::commands::run_command;
use plec::config::ExperimentConfig;
use plec_core::pec::Backend;

#[derive(Parser)]
#[command(
    name = "plec",
    about = "Sparse Pauli-Lindblad noise learning and probabilistic error cancellation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn noise models for the configured gate layers.
    Learn(RunArgs),
    /// Run PEC on a configured circuit and report mitigated observables.
    Mitigate(RunArgs),
    /// Error-mitigated Trotter evolution of the Ising chain.
    Ising(RunArgs),
    /// Analytic sampling-overhead (gamma) scaling table.
    Gamma(RunArgs),
    /// Emit the nine-basis measurement plan per layer.
    Bases(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output root directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation backend for PEC runs.
    #[arg(long, value_parser = parse_backend)]
    backend: Option<Backend>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// (learn only) Calibrate the maximum benchmark depth by binary search
    /// up to this even bound before learning.
    #[arg(long)]
    calibrate_max_depth: Option<usize>,
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    match s {
        "clifford" => Ok(Backend::Clifford),
        "state" => Ok(Backend::State),
        other => Err(format!("unknown backend {other:?} (clifford|state)")),
    }
}

fn run() -> anyhow::Result<()> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            // Bad flags are user errors (exit 1); help/version print and exit 0.
            eprint!("{e}");
            std::process::exit(1);
        }
        Err(e) => {
            print!("{e}");
            return Ok(());
        }
    };
    let (name, args) = match &cli.command {
        Command::Learn(a) => ("learn", a),
        Command::Mitigate(a) => ("mitigate", a),
        Command::Ising(a) => ("ising", a),
        Command::Gamma(a) => ("gamma", a),
        Command::Bases(a) => ("bases", a),
    };
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| anyhow::anyhow!("cannot configure thread pool: {e}"))?;
    }
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(backend) = args.backend {
        cfg.pec.backend = backend;
    }
    let out_root = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    let out = match (name, args.calibrate_max_depth) {
        ("learn", Some(k_max)) => plec::commands::cmd_learn_calibrated(&cfg, &out_root, k_max)?,
        (_, Some(_)) => anyhow::bail!("--calibrate-max-depth applies to the learn command only"),
        _ => run_command(name, &cfg, &out_root)?,
    };
    println!("{}", out.dir.display());
    for f in &out.files {
        println!("  {f}");
    }
    Ok(())
}

fn main() -> ExitCode {
    // Exit codes: 0 ok, 1 user error (config, files, validation), 2 internal.
    match std::panic::catch_unwind(run) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
        Err(_) => {
            eprintln!("internal error: panic during execution");
            ExitCode::from(2)
        }
    }
}

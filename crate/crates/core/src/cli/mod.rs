//! Command-line front end: `lml <command> --config FILE --out DIR`.
//!
//! Every command validates its whole config before computing, embeds the
//! config hash and seed in every output file and writes nothing on failure.
//! Exit codes: 0 success, 2 config error, 3 numeric failure, 4 a thresholded
//! check failed under `--assert`.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use crate::diagnostics::Provenance;
use crate::error::{Error, Result};

pub mod commands;
pub mod config;

use commands::CommandOutput;
use config::{
    config_hash, load_config, BenchConfig, CommandConfig, CompareConfig, ConvergenceConfig, HessianErrorConfig,
    SampleConfig, StationarityConfig,
};

#[derive(Debug, Parser)]
#[command(name = "lml", version, about = "Damped-geometry diffusion sampling experiments on analytic mixture targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw samples with the LML sampler or a baseline.
    Sample(CommonArgs),
    /// Sliced-Wasserstein table of samplers across NFE budgets.
    Compare(CommonArgs),
    /// KS test of fixed-level damped Langevin against its target.
    Stationarity(CommonArgs),
    /// χ² decay of fixed-level damped Langevin and its fitted rate.
    Convergence(CommonArgs),
    /// Rank-1 Hessian error against its a-priori bound.
    HessianError(CommonArgs),
    /// Per-step arithmetic overhead of the geometry.
    Bench(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Exit with code 4 when a thresholded check fails.
    #[arg(long)]
    pub assert: bool,
}

/// Result of a command run through [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub passed: bool,
}

impl Outcome {
    pub fn exit_code(&self, assert: bool) -> i32 {
        if assert && !self.passed {
            4
        } else {
            0
        }
    }
}

fn execute<C, F>(name: &str, args: &CommonArgs, f: F) -> Result<Outcome>
where
    C: CommandConfig,
    F: FnOnce(&C, Provenance) -> Result<CommandOutput> + Send,
{
    let cfg: C = load_config(args.config.as_deref(), args.seed)?;
    let prov = Provenance {
        command: name.to_string(),
        config_hash: config_hash(&cfg)?,
        seed: cfg.seed(),
    };
    let output = match args.threads {
        Some(0) => return Err(Error::config("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("cannot start thread pool: {e}")))?
            .install(|| f(&cfg, prov))?,
        None => f(&cfg, prov)?,
    };
    let written = write_outputs(&args.out, &output)?;
    Ok(Outcome {
        written,
        passed: output.passed,
    })
}

fn write_outputs(dir: &Path, output: &CommandOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(output.files.len());
    for (name, contents) in &output.files {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
    }
    Ok(written)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Sample(a) => execute::<SampleConfig, _>("sample", a, commands::cmd_sample),
        Command::Compare(a) => execute::<CompareConfig, _>("compare", a, commands::cmd_compare),
        Command::Stationarity(a) => execute::<StationarityConfig, _>("stationarity", a, commands::cmd_stationarity),
        Command::Convergence(a) => execute::<ConvergenceConfig, _>("convergence", a, commands::cmd_convergence),
        Command::HessianError(a) => execute::<HessianErrorConfig, _>("hessian-error", a, commands::cmd_hessian_error),
        Command::Bench(a) => execute::<BenchConfig, _>("bench", a, commands::cmd_bench),
    }
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Sample(a)
            | Command::Compare(a)
            | Command::Stationarity(a)
            | Command::Convergence(a)
            | Command::HessianError(a)
            | Command::Bench(a) => a,
        }
    }
}

/// Runs the parsed command line and maps the outcome to a process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let assert = cli.command.common().assert;
    match run(&cli) {
        Ok(outcome) => {
            for p in &outcome.written {
                println!("wrote {}", p.display());
            }
            if !outcome.passed {
                eprintln!("one or more checks failed");
            }
            outcome.exit_code(assert)
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

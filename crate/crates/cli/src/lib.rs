//! Command-line experiment runner: `solve`, `invert` and `fit` from JSON configs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod family;
pub mod problem;
pub mod registry;

use std::path::{Path, PathBuf};
use std::process::{Child, Command as Process};

use clap::{Args, Parser, Subcommand};

use crate::commands::{run_command, Command};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "varphys", version, about = "Variational inference for 1D Poisson problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Solve the forward problem at `coefficients` and write nodal values.
    Solve(RunArgs),
    /// Deterministic inversion (Tikhonov or physics-regularized).
    Invert(RunArgs),
    /// Train a registered objective.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Run the finite-difference gradient suite instead of training.
        #[arg(long)]
        check_grad: bool,
    },
    /// List the registered objectives.
    Registry,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config(s); several configs form a batch.
    #[arg(long, required = true, num_args = 1..)]
    pub config: Vec<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (defaults to the config's `output`, then `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run a batch in this many parallel processes.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

/// Parses arguments, runs, prints any error, and returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let (cmd, args) = match cli.command {
        CliCommand::Registry => {
            for name in registry::REGISTRY {
                println!("{name}");
            }
            return Ok(());
        }
        CliCommand::Solve(a) => (Command::Solve, a),
        CliCommand::Invert(a) => (Command::Invert, a),
        CliCommand::Fit { run, check_grad } => (Command::Fit { check_grad }, run),
    };
    if args.jobs == 0 {
        return Err(CliError::config("--jobs", "must be at least 1"));
    }
    if args.config.len() == 1 {
        let loaded = config::load(&args.config[0])?;
        let out = args
            .out
            .clone()
            .or_else(|| loaded.config.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        return run_command(cmd, &loaded, args.seed, &out);
    }
    batch(cmd, &args)
}

/// Runs every config in its own child process, at most `jobs` at a time,
/// writing into `<out>/<config stem>`. Returns the worst child failure.
fn batch(cmd: Command, args: &RunArgs) -> CliResult<()> {
    let root = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut stems: Vec<String> = Vec::new();
    for path in &args.config {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if stems.contains(&stem) {
            return Err(CliError::config("--config", format!("two configs share the output name `{stem}`")));
        }
        config::load(path)?;
        stems.push(stem);
    }
    let exe = std::env::current_exe()?;
    let mut running: Vec<(String, Child)> = Vec::new();
    let mut worst = 0;
    let mut failed = Vec::new();
    let mut wait_one = |running: &mut Vec<(String, Child)>| -> CliResult<()> {
        let (stem, mut child) = running.remove(0);
        let code = child.wait()?.code().unwrap_or(3);
        if code != 0 {
            worst = worst.max(code);
            failed.push(stem);
        }
        Ok(())
    };
    for (path, stem) in args.config.iter().zip(&stems) {
        if running.len() >= args.jobs {
            wait_one(&mut running)?;
        }
        let child = spawn(&exe, cmd, path, &root.join(stem), args.seed)?;
        running.push((stem.clone(), child));
    }
    while !running.is_empty() {
        wait_one(&mut running)?;
    }
    match worst {
        0 => Ok(()),
        2 => Err(CliError::config("--config", format!("failed: {}", failed.join(", ")))),
        4 => Err(CliError::Io(format!("failed: {}", failed.join(", ")))),
        _ => Err(CliError::Numeric(format!("failed: {}", failed.join(", ")))),
    }
}

fn spawn(exe: &Path, cmd: Command, config: &Path, out: &Path, seed: Option<u64>) -> CliResult<Child> {
    let mut p = Process::new(exe);
    p.arg(cmd.name()).arg("--config").arg(config).arg("--out").arg(out);
    if let Some(s) = seed {
        p.arg("--seed").arg(s.to_string());
    }
    if let Command::Fit { check_grad: true } = cmd {
        p.arg("--check-grad");
    }
    Ok(p.spawn()?)
}

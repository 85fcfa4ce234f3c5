//! `isoflow` batch front-end.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::{Command, Context};
use config::RunConfig;
use output::{Output, Status};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("computation failed: {0}")]
    Compute(String),
}

#[derive(Parser, Debug)]
#[command(name = "isoflow", version, about = "Isoperimetric checks for perturbed Gaussian densities on slabs")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Parallel and perpendicular isoperimetric profiles and their comparison.
    Profile(Common),
    /// Monotone transport from the Gaussian and its contraction certificate.
    Transport(Common),
    /// Spectral gap of the vertical factor and the Poincaré certificate.
    Spectrum(Common),
    /// Parallel half-space stability and vertical-line index forms.
    Stability(Common),
    /// Jacobi eigen-identity on shot constant-curvature curves.
    Jacobi(Common),
    /// Fixed-area chord minimization.
    Optimize(Common),
    /// Every command, with an aggregated summary.
    All(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[run] output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "ISOFLOW_THREADS")]
    threads: Option<usize>,
    /// Treat the spectral bound as required even for non-concave weights.
    #[arg(long)]
    expect_bound: bool,
}

fn execute(sub: Sub) -> Result<Status, CliError> {
    let (commands, args, all) = match sub {
        Sub::Profile(a) => (vec![Command::Profile], a, false),
        Sub::Transport(a) => (vec![Command::Transport], a, false),
        Sub::Spectrum(a) => (vec![Command::Spectrum], a, false),
        Sub::Stability(a) => (vec![Command::Stability], a, false),
        Sub::Jacobi(a) => (vec![Command::Jacobi], a, false),
        Sub::Optimize(a) => (vec![Command::Optimize], a, false),
        Sub::All(a) => (Command::ALL.to_vec(), a, true),
    };
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(out) = args.out {
        config.output = out;
    }
    let density = config.density()?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = Output::create(&config.output)?;
    out.write("resolved.cfg", config.echo().as_bytes())?;
    let ctx = Context {
        config: &config,
        density,
        out: &out,
        expect_bound: args.expect_bound,
    };
    let mut records = Vec::new();
    for cmd in commands {
        let record = commands::run(&ctx, cmd)?;
        if let Some(msg) = &record.message {
            eprintln!("{}: {msg}", cmd.name());
        }
        eprintln!("{}: {}", cmd.name(), serde_json::to_value(record.status).unwrap_or_default());
        records.push(record);
    }
    let status = commands::summary_status(&records);
    if all {
        out.json("summary.json", &json!({ "status": status, "records": records }))?;
    }
    Ok(status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("isoflow: {e}");
            ExitCode::from(1)
        }
    }
}

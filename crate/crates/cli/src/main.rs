//! `grauert` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use grauert_cli::{parse_config, run, Command, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "grauert", version, about = "Verification campaigns for Grauert tubes of the Heisenberg group")]
struct Args {
    /// Configuration file (`key = value` lines); defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Campaign to run (overrides `command`).
    #[arg(long)]
    command: Option<Command>,
}

fn load(args: &Args) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(c) = args.command {
        cfg.command = Some(c);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let start = Instant::now();
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = report.write(&cfg.output.dir, start.elapsed().as_secs_f64()) {
        eprintln!("error: writing report to {}: {e}", cfg.output.dir.display());
        return ExitCode::from(2);
    }
    print!("{}", report.to_text());
    for c in report.failed_checks() {
        eprintln!("failed invariant: {} ({})", c.name, c.detail);
    }
    for f in &report.budget_flags {
        eprintln!("budget flag: {f}");
    }
    ExitCode::from(report.exit_code() as u8)
}

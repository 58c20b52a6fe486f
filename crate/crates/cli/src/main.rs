//! Command-line driver: parses a run configuration (JSON file plus flag
//! overrides), dispatches to one of the experiment modes, and reports through
//! exit codes: 0 success, 2 configuration error, 3 non-convergence,
//! 4 admissibility violation, 5 tolerance failure.

mod config;
mod emit;
mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use config::{Mode, RunConfig};
use mffbsde::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mffbsde",
    about = "Particle Monte Carlo laboratory for doubly coupled mean-field FBSDEs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Ensemble size (number of particles).
    #[arg(long, global = true)]
    particles: Option<usize>,
    /// Number of time steps.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Seed for the driving noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fixed-point iteration tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Continuation targets, comma separated, increasing from 0.
    #[arg(long = "alpha-steps", global = true)]
    alpha_steps: Option<String>,
    /// Output directory for artifacts.
    #[arg(long = "out", global = true)]
    out_dir: Option<PathBuf>,
    /// Builtin problem tag or path to a problem file.
    #[arg(long, global = true)]
    problem: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled system and extract the optimal quadruple.
    Solve,
    /// Run the structural-assumption checkers on the problem coefficients.
    Check,
    /// Solve the closed-form benchmark and compare against its exact solution.
    ExampleLc,
    /// Cross-validate the constrained LQ solution against direct minimization.
    LqicCompare,
    /// Probe solution sensitivity to small generator perturbations.
    Stability,
}

fn build_config(cli: &Cli) -> Result<(RunConfig, Mode)> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mode = match cli.command {
        Command::Solve => Mode::Solve,
        Command::Check => Mode::Check,
        Command::ExampleLc => Mode::ExampleLc,
        Command::LqicCompare => Mode::LqicCompare,
        Command::Stability => Mode::Stability,
    };
    if let Some(p) = cli.particles {
        cfg.particles = p;
    }
    if let Some(s) = cli.steps {
        cfg.steps = s;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tol {
        cfg.tol = t;
    }
    if let Some(list) = &cli.alpha_steps {
        cfg.alpha_schedule = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad alpha step '{s}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(p) = &cli.problem {
        cfg.problem = Some(p.clone());
    }
    cfg.validate()?;
    Ok((cfg, mode))
}

fn main() {
    let cli = Cli::parse();
    let code = match build_config(&cli).and_then(|(cfg, mode)| run::run(&cfg, mode)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            run::exit_code(&e)
        }
    };
    std::process::exit(code);
}

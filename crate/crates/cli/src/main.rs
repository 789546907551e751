//! `cms-lab`: runs one experiment, writes `report.json` (and `series.csv`
//! where there is a series) into the output directory.
//!
//! Exit codes: 0 all checks pass, 2 configuration error, 3 check failure,
//! 4 solver failure.

mod config;
mod experiments;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Flags;
use experiments::RunError;

#[derive(Parser)]
#[command(name = "cms-lab", version, about = "Particle flows, heat polynomials and Monte Carlo identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Zeros of the family's classical polynomial.
    Zeros(Flags),
    /// Deterministic particle flow.
    Flow(Flags),
    /// Distance of two flows against a decay bound.
    Stability(Flags),
    /// Particle flow against the coefficient-flow oracle and the heat equation.
    HeatCheck(Flags),
    /// Euler-Maruyama paths of the diffusion.
    Sde(Flags),
    /// Monte Carlo identity (`--identity <tag>` or `martingale-<tag>`).
    Expect(Flags),
}

fn run(cli: Cli) -> Result<bool, RunError> {
    let (name, flags, f): (&str, Flags, fn(&mut config::ExperimentConfig) -> Result<experiments::Outcome, RunError>) =
        match cli.command {
            Command::Zeros(fl) => ("zeros", fl, experiments::zeros),
            Command::Flow(fl) => ("flow", fl, experiments::flow),
            Command::Stability(fl) => ("stability", fl, experiments::stability),
            Command::HeatCheck(fl) => ("heat-check", fl, experiments::heat_check),
            Command::Sde(fl) => ("sde", fl, experiments::sde),
            Command::Expect(fl) => ("expect", fl, experiments::expect),
        };
    let mut cfg = config::merge(name, &flags)?;
    let seed = cfg.seed();
    let dir = cfg.out_dir();
    let outcome = f(&mut cfg)?;
    let io = |e: std::io::Error| RunError::Config(format!("cannot write to {}: {e}", dir.display()));
    std::fs::create_dir_all(&dir).map_err(io)?;
    output::write_report(&dir, &cfg, seed, &outcome.checks, &outcome.results).map_err(io)?;
    if let Some(s) = &outcome.series {
        output::write_series(&dir, &s.header, &s.rows).map_err(io)?;
    }
    let failed: Vec<_> = outcome.checks.iter().filter(|c| !c.pass).collect();
    if let Some(c) = failed.first() {
        eprintln!("check failed: {} = {:e} (tolerance {:e}), {} failing in total", c.name, c.value, c.tolerance, failed.len());
    }
    Ok(failed.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(RunError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(RunError::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(4)
        }
    }
}

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "henon-split", version, about = "Separatrix splitting in the area-preserving Henon family", after_help = config::KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// log of the larger saddle eigenvalue
    #[arg(long, global = true, conflicts_with = "eps")]
    h: Option<f64>,
    /// distance from the period-doubling value
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// working precision in bits (defaults to the precision policy for h)
    #[arg(long, global = true)]
    bits: Option<u32>,
    /// output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// comma-separated h values for sweep
    #[arg(long, global = true, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// worker threads for sweep
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Fixed point and eigenvalues; writes fixedpoint.csv
    Fixedpoint,
    /// Unstable manifold coefficients; writes manifold.csv
    Manifold,
    /// Homoclinic invariant at one h; writes theta.csv (one sweep row)
    Theta,
    /// theta over an h-grid; writes sweep.csv
    Sweep,
    /// Exponential-law fits of sweep.csv (runs the sweep when absent); writes fit.csv and error_term.csv
    Fit,
    /// Inner separatrices and Theta_1; writes inner.csv and theta1.csv
    Inner,
    /// WKB constants and model-equation residual exponents; writes wkb.csv
    WkbCheck,
    /// Invariant suite; writes verify.csv, exit 0 iff all pass
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Fixedpoint => "fixedpoint",
            Command::Manifold => "manifold",
            Command::Theta => "theta",
            Command::Sweep => "sweep",
            Command::Fit => "fit",
            Command::Inner => "inner",
            Command::WkbCheck => "wkb-check",
            Command::Verify => "verify",
        }
    }
}

fn merged_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.h.is_some() || cli.eps.is_some() {
        cfg.general.h = cli.h;
        cfg.general.eps = cli.eps;
    }
    if cli.bits.is_some() {
        cfg.general.bits = cli.bits;
    }
    if let Some(o) = &cli.out {
        cfg.general.out = Some(o.display().to_string());
    }
    if cli.grid.is_some() {
        cfg.sweep.grid = cli.grid.clone();
    }
    if cli.jobs.is_some() {
        cfg.general.jobs = cli.jobs;
    }
    if cli.verbose {
        cfg.general.verbose = Some(true);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match merged_config(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let dir = cfg.out_dir();
    let name = cli.command.name();
    output::log_line(&dir, &format!("cmd={name} status=start config={:?}", cfg.to_text().replace('\n', "; ")));
    match commands::run(cli.command, &cfg) {
        Ok(outcome) => {
            let status = if outcome.passed { "ok" } else { "failed" };
            output::log_line(&dir, &format!("cmd={name} status={status} {}", outcome.summary));
            println!("{}", outcome.summary);
            ExitCode::from(if outcome.passed { 0 } else { 1 })
        }
        Err(commands::Failure::Usage(msg)) => {
            output::log_line(&dir, &format!("cmd={name} status=error reason=UsageError detail={msg:?}"));
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Compute(e)) => {
            output::log_line(&dir, &format!("cmd={name} status=error reason={} detail={:?}", e.reason(), e.to_string()));
            eprintln!("error [{}]: {e}", e.reason());
            ExitCode::from(1)
        }
        Err(commands::Failure::Io(e)) => {
            output::log_line(&dir, &format!("cmd={name} status=error reason=IoError detail={:?}", e.to_string()));
            eprintln!("error [IoError]: {e}");
            ExitCode::from(1)
        }
    }
}

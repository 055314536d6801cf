//! `fbm-drift simulate | operator | optimize | verify`
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 numeric failure,
//! 3 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fbm_drift::commands::{cmd_operator, cmd_optimize, cmd_simulate, cmd_verify};
use fbm_drift::config::{Overrides, RunConfig};
use fbm_drift::verify::{all_passed, render_table};
use fbm_drift::Error;

#[derive(Parser, Debug)]
#[command(name = "fbm-drift", version, about = "Noise/drift decomposition of fBm and programmed mean-variance strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    replicas: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Hurst exponent H.
    #[arg(long, global = true)]
    hurst: Option<f64>,
    /// Horizon T.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Risk aversion λ.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Investment penalty k.
    #[arg(long = "penalty-k", global = true)]
    penalty_k: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Simulate W_H, R_H and DR_H paths and their summary statistics.
    Simulate,
    /// Build and export the covariance operator Γ.
    Operator,
    /// Solve for the optimal programmed strategy per past realization.
    Optimize,
    /// Run the Monte Carlo verification suite.
    Verify,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::UnknownCheck(_) | Error::Io(_) => 1,
        Error::Domain(_) | Error::GridMismatch(_) | Error::Factorization(_) | Error::Solver { .. } | Error::Json(_) => 2,
    }
}

fn load(cli: &Cli) -> fbm_drift::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        replicas: cli.replicas,
        threads: cli.threads,
        output_dir: cli.output.clone(),
        h: cli.hurst,
        horizon: cli.horizon,
        lambda: cli.lambda,
        k: cli.penalty_k,
        mu: cli.mu,
        sigma: cli.sigma,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> fbm_drift::Result<u8> {
    let cfg = load(cli)?;
    let files = match cli.command {
        Command::Simulate => cmd_simulate(&cfg)?,
        Command::Operator => cmd_operator(&cfg)?,
        Command::Optimize => {
            let (records, files) = cmd_optimize(&cfg)?;
            let worst = records.iter().map(|r| r.residual).fold(0.0, f64::max);
            println!("{} strategies, max relative residual {worst:.3e}", records.len());
            files
        }
        Command::Verify => {
            let (reports, files) = cmd_verify(&cfg)?;
            print!("{}", render_table(&reports));
            for f in &files {
                log::info!("wrote {}", f.display());
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if !all_passed(&reports) {
                eprintln!("{failed} of {} checks failed", reports.len());
                return Ok(3);
            }
            return Ok(0);
        }
    };
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

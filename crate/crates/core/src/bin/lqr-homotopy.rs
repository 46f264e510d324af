use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lqr_homotopy::experiment::{
    cmd_dare, cmd_gradcheck, cmd_landscape, cmd_train, cmd_verify, CommandResult, ExperimentConfig,
    EXIT_CONFIG,
};

/// Policy-gradient experiments for discounted LQR.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Riccati equation over the schedule's discount factors.
    Dare(Common),
    /// Run homotopy or fixed-discount policy gradient.
    Train(Common),
    /// Tabulate the cost on a parameter grid.
    Landscape(Common),
    /// Probe a candidate local minimum along many directions.
    Verify(Common),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's `output_dir`, then `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(command: Command) -> CommandResult {
    let (common, kind) = match command {
        Command::Dare(c) => (c, "dare"),
        Command::Train(c) => (c, "train"),
        Command::Landscape(c) => (c, "landscape"),
        Command::Verify(c) => (c, "verify"),
        Command::Gradcheck(c) => (c, "gradcheck"),
    };
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match kind {
        "dare" => cmd_dare(&cfg, &out)?,
        "train" => {
            let s = cmd_train(&cfg, &out)?;
            println!(
                "gamma {} cost {:.10} optimum {:.10} gap {:.3e} after {} iterations",
                s.final_gamma, s.final_cost, s.oracle_optimal_cost, s.final_gap, s.iterations
            );
        }
        "landscape" => {
            let land = cmd_landscape(&cfg, &out)?;
            let (i, j) = land.argmin();
            println!(
                "grid minimum {:.10} at ({}, {})",
                land.cost(i, j),
                land.theta0[i],
                land.theta1[j]
            );
        }
        "verify" => {
            let r = cmd_verify(&cfg, &out)?;
            println!(
                "{} samples, min ratio {:.4}, no negative samples",
                r.samples, r.min_ratio
            );
        }
        _ => {
            let s = cmd_gradcheck(&cfg, &out)?;
            println!(
                "{} points, max relative error {:.3e} (tolerance {:.1e}), {} skipped at kinks",
                s.checked, s.max_rel_err, s.rel_tol, s.skipped_at_kinks
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap's own usage-error code (2) is reserved for Riccati failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Discount-factor homotopy on `(A, B, Q, R) = (0.1, 1, 1, 0.1)`: per-stage exit
//! cost against the Riccati optimum.
//!
//! Run with `cargo run --release --example homotopy_staircase`.

use lqr_homotopy::counterexample::{make_mu0, reference_x0, reference_y0, staircase_problem};
use lqr_homotopy::policy::make_counterexample_class;
use lqr_homotopy::{run_homotopy, HomotopySchedule, Horizon, PgConfig};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = staircase_problem();
    let class = make_counterexample_class(5e-4)?;
    let dist = make_mu0(0.0, reference_x0(), reference_y0())?;
    let cfg = PgConfig {
        horizon: Horizon::Fixed(5),
        log_every: 1000,
        ..PgConfig::default()
    };
    let log = run_homotopy(
        &problem,
        &class,
        &DVector::zeros(2),
        &dist,
        &HomotopySchedule::default(),
        &cfg,
    )?;
    println!(
        "{:>5} {:>7} {:>12} {:>12} {:>10}",
        "gamma", "iters", "exit cost", "optimum", "gap"
    );
    for s in log.stages.iter().step_by(5).chain(log.final_stage()) {
        println!(
            "{:>5.2} {:>7} {:>12.8} {:>12.8} {:>10.2e}",
            s.gamma, s.iterations_used, s.cost_at_exit, s.oracle_optimal_cost, s.gap
        );
    }
    println!(
        "{} iterations in total, all stages converged: {}",
        log.total_iterations(),
        log.complete
    );
    Ok(())
}

//! Fixed-discount descent started at the local minimum `(0, 1)` stays there; the
//! homotopy started at zero follows the optimum up to `gamma = 0.98`.
//!
//! Run with `cargo run --release --example trap_vs_escape`.

use lqr_homotopy::counterexample::{
    reference_setup, trapped_theta, EPISODE_STEPS, REFERENCE_GAMMA,
};
use lqr_homotopy::{
    optimal_cost, run_homotopy, run_vanilla, solve_dare, HomotopySchedule, Horizon, PgConfig,
};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (problem, class, dist) = reference_setup(0.0)?;
    let horizon = Horizon::Fixed(EPISODE_STEPS);
    let oracle = optimal_cost(&solve_dare(&problem, REFERENCE_GAMMA)?, &dist)?;

    for step_size in [1e-7, 1e-3] {
        let cfg = PgConfig {
            step_size,
            horizon,
            log_every: 10_000,
            ..PgConfig::default()
        };
        let log = run_vanilla(
            &problem,
            &class,
            &trapped_theta(),
            &dist,
            REFERENCE_GAMMA,
            &cfg,
        )?;
        let last = log.last().expect("non-empty log");
        println!(
            "fixed gamma, step {step_size:e}: theta = ({:.5}, {:.5}), gap {:.4} after {} iterations",
            last.theta[0],
            last.theta[1],
            last.cost - oracle,
            log.iterations
        );
    }

    let cfg = PgConfig {
        horizon,
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
    let last = log.final_stage().expect("non-empty schedule");
    println!(
        "homotopy: gamma {} gap {:.2e} at theta = {:?}",
        last.gamma, last.gap, last.theta_at_exit
    );
    Ok(())
}

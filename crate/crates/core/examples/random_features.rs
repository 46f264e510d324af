//! Homotopy with random ReLU features under a uniform initial distribution. The
//! class contains every linear gain, so the continuation tracks the optimum.
//!
//! Run with `cargo run --release --example random_features`.

use lqr_homotopy::counterexample::staircase_problem;
use lqr_homotopy::policy::make_random_features_class;
use lqr_homotopy::{run_homotopy, HomotopySchedule, Horizon, InitialDistribution, PgConfig};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = staircase_problem();
    let class = make_random_features_class(1, 3)?;
    let dist = InitialDistribution::uniform(-5.0, 5.0, 128)?;
    let cfg = PgConfig {
        step_size: 0.01,
        horizon: Horizon::Auto { tol: 1e-10 },
        log_every: 1000,
        ..PgConfig::default()
    };
    let schedule = HomotopySchedule::arithmetic(0.1, 0.9)?;
    let log = run_homotopy(
        &problem,
        &class,
        &DVector::zeros(class.len()),
        &dist,
        &schedule,
        &cfg,
    )?;
    for s in &log.stages {
        println!(
            "gamma {:.1}: {:>5} iterations, gap {:.2e}",
            s.gamma, s.iterations_used, s.gap
        );
    }
    Ok(())
}

//! Riccati solutions along a discount grid, warm-started from the previous point.
//!
//! Run with `cargo run --example dare_sweep`.

use lqr_homotopy::counterexample::staircase_problem;
use lqr_homotopy::{gamma_sweep, LqrProblem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = staircase_problem();
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
    println!(
        "{:>5} {:>12} {:>12} {:>7} {:>9}",
        "gamma", "P", "K*", "iters", "residual"
    );
    for sol in gamma_sweep(&problem, &grid)? {
        println!(
            "{:>5.2} {:>12.9} {:>12.9} {:>7} {:>9.1e}",
            sol.gamma,
            sol.p[(0, 0)],
            sol.k_star[(0, 0)],
            sol.iterations,
            sol.residual
        );
    }

    // closed form for A = B = Q = R = 1: gamma P^2 - (2 gamma - 1) P - 1 = 0 at gamma = 0.9
    let unit = LqrProblem::scalar(1.0, 1.0, 1.0, 1.0)?;
    let p = gamma_sweep(&unit, &[0.9])?[0].p[(0, 0)];
    let root = (0.8 + (0.64f64 + 3.6).sqrt()) / 1.8;
    println!("unit problem at gamma 0.9: P = {p:.12}, quadratic root {root:.12}");
    Ok(())
}

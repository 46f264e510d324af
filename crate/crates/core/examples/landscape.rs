//! Cost grid around `(0, 1)`, written to `landscape.csv` in the working directory.
//!
//! Run with `cargo run --release --example landscape`.

use std::path::Path;

use lqr_homotopy::counterexample::{
    landscape_grid, reference_setup, EPISODE_STEPS, REFERENCE_GAMMA,
};
use lqr_homotopy::Horizon;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (problem, class, dist) = reference_setup(0.0)?;
    let horizon = Horizon::Fixed(EPISODE_STEPS);
    for half_width in [1e-4, 1e-2, 1.0] {
        let land = landscape_grid(
            &problem,
            &class,
            &dist,
            REFERENCE_GAMMA,
            [0.0, 1.0],
            [half_width, half_width],
            101,
            horizon,
        )?;
        let (i, j) = land.argmin();
        println!(
            "half-width {half_width:e}: minimum {:.6} at ({:.5}, {:.5}), center cost {:.6}",
            land.cost(i, j),
            land.theta0[i],
            land.theta1[j],
            land.cost(land.center().0, land.center().1)
        );
        if half_width == 1e-4 {
            land.write_csv(Path::new("landscape.csv"))?;
        }
    }
    Ok(())
}

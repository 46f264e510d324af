//! Reverse-mode gradients against central differences at random parameters.
//!
//! Run with `cargo run --release --example gradient_check`.

use lqr_homotopy::counterexample::reference_setup;
use lqr_homotopy::{cost_gradient, fd_gradient, Horizon, Policy};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (problem, class, dist) = reference_setup(0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for gamma in [0.0, 0.5, 0.9] {
        let mut worst = 0.0f64;
        let mut rejected = 0;
        let mut checked = 0;
        while checked < 20 {
            let theta = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let policy = Policy::new(class.clone(), theta)?;
            // unstable closed loops and rollouts through a kink are resampled
            let report = match cost_gradient(&problem, &policy, &dist, gamma, Horizon::default()) {
                Ok(r) if r.kink_hits == 0 => r,
                _ => {
                    rejected += 1;
                    continue;
                }
            };
            let fd = fd_gradient(
                &problem,
                &policy,
                &dist,
                gamma,
                Horizon::Fixed(report.horizon_used),
                1e-6,
            )?;
            worst = worst.max((&report.grad - &fd).amax() / report.grad.amax().max(fd.amax()));
            checked += 1;
        }
        println!("gamma {gamma}: max relative error {worst:.2e}, {rejected} samples rejected");
    }
    Ok(())
}

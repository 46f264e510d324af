//! Probes `theta = (0, 1)` of the two-feature class along many directions and
//! prints the analytic constants that bound the cost increase.
//!
//! Run with `cargo run --release --example counterexample_local_min`.

use lqr_homotopy::counterexample::{
    constants, delta_conditions, reference_setup, uniform_part_bound_check, verify_local_min,
    ConeGeometry, EPISODE_STEPS, REFERENCE_DELTA, REFERENCE_GAMMA, REFERENCE_R,
};
use lqr_homotopy::Horizon;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geom = ConeGeometry::reference();
    let c = constants(REFERENCE_GAMMA, REFERENCE_R, REFERENCE_DELTA, &geom)?;
    println!(
        "x0 = {:.6}, y0 = {:.6}, M = {:.5}, alpha = {:.5}",
        geom.x0, geom.y0, geom.m, geom.alpha
    );
    println!(
        "L = {}, K = {:.4e}, K' = {:.4e}, eps_max = {:.3e}",
        c.l, c.k, c.kprime, c.eps_max
    );
    for d in delta_conditions(REFERENCE_GAMMA, REFERENCE_R, REFERENCE_DELTA, &geom) {
        println!(
            "tent condition at z0 = {:.4}: delta must be below {:.3e} (satisfied: {})",
            d.z0, d.delta_limit, d.satisfied
        );
    }

    let (problem, class, dist) = reference_setup(0.0)?;
    let horizon = Horizon::Fixed(EPISODE_STEPS);
    let report = verify_local_min(
        &problem,
        &class,
        &dist,
        REFERENCE_GAMMA,
        1e-4,
        360,
        6,
        horizon,
    )?;
    println!(
        "{} perturbations, {} non-positive; min dC/|dtheta|_1 = {:.3} (outside cones {:.3}, bound {:.3})",
        report.samples,
        report.negative_samples.len(),
        report.min_ratio,
        report.min_ratio_outside_cones,
        report.outside_cone_bound
    );

    let uniform = uniform_part_bound_check(&problem, &class, REFERENCE_GAMMA, 64, 1e-6)?;
    println!(
        "uniform-part Lipschitz estimate {:.3} <= K' = {:.3e}: {}",
        uniform.estimate, uniform.kprime, uniform.within_bound
    );
    Ok(())
}

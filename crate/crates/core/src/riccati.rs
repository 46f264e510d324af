//! Discounted discrete-time algebraic Riccati equation by fixed-point iteration.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::policy::PolicyClass;
use crate::problem::{check_gamma, InitialDistribution, LinearFeedback, LqrProblem};

/// Stopping threshold on `||P - T(P)||`.
pub const DARE_TOL: f64 = 1e-12;
/// Iteration budget of the fixed-point solver.
pub const DARE_MAX_ITERS: usize = 1_000_000;
/// Largest admissible representation residual in [`optimal_theta`], relative to the
/// size of `K* x` on the probe grid.
pub const REPRESENTATION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DareSolution {
    pub gamma: f64,
    pub p: DMatrix<f64>,
    pub k_star: DMatrix<f64>,
    /// `||P - T(P)||_F` at the returned `P`.
    pub residual: f64,
    pub iterations: usize,
}

impl DareSolution {
    /// The optimal linear feedback `u = K* x`.
    pub fn feedback(&self) -> LinearFeedback {
        LinearFeedback {
            gain: self.k_star.clone(),
        }
    }

    /// Spectral radius of the closed loop `A + B K*`.
    pub fn closed_loop_radius(&self, problem: &LqrProblem) -> f64 {
        let acl = problem.a() + problem.b() * &self.k_star;
        acl.complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// `(R + gamma B'PB)^{-1} B'PA` by Cholesky.
fn gain_core(problem: &LqrProblem, p: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let bt = problem.b().transpose();
    let s = problem.r() + gamma * &bt * p * problem.b();
    let chol = s.cholesky().ok_or(Error::Singular("R + gamma B'PB"))?;
    Ok(chol.solve(&(&bt * p * problem.a())))
}

/// One application of the discounted Riccati map.
pub fn riccati_map(problem: &LqrProblem, p: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let a = problem.a();
    let at = a.transpose();
    let core = gain_core(problem, p, gamma)?;
    let next = gamma * &at * p * a - gamma * gamma * &at * p * problem.b() * core + problem.q();
    Ok((&next + next.transpose()) * 0.5)
}

/// `K = -gamma (R + gamma B'PB)^{-1} B'PA`.
pub fn gain(problem: &LqrProblem, p: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    Ok(-gamma * gain_core(problem, p, gamma)?)
}

/// Solves the discounted DARE starting from `P = Q`.
pub fn solve_dare(problem: &LqrProblem, gamma: f64) -> Result<DareSolution> {
    solve_dare_from(problem, gamma, problem.q())
}

/// Solves the discounted DARE starting from `p0`.
pub fn solve_dare_from(
    problem: &LqrProblem,
    gamma: f64,
    p0: &DMatrix<f64>,
) -> Result<DareSolution> {
    check_gamma(gamma)?;
    let n = problem.state_dim();
    check_dim("initial Riccati iterate", n, p0.nrows())?;
    check_dim("initial Riccati iterate", n, p0.ncols())?;
    let mut p = p0.clone();
    let mut residual = f64::INFINITY;
    for iter in 0..DARE_MAX_ITERS {
        let next = riccati_map(problem, &p, gamma)?;
        residual = (&next - &p).norm();
        if !residual.is_finite() {
            return Err(Error::DareNotConverged {
                iterations: iter + 1,
                residual,
            });
        }
        p = next;
        if residual <= DARE_TOL {
            let k_star = gain(problem, &p, gamma)?;
            let residual = (riccati_map(problem, &p, gamma)? - &p).norm();
            return Ok(DareSolution {
                gamma,
                p,
                k_star,
                residual,
                iterations: iter + 1,
            });
        }
    }
    Err(Error::DareNotConverged {
        iterations: DARE_MAX_ITERS,
        residual,
    })
}

/// `E[x0' P x0]` over `dist`.
pub fn optimal_cost(sol: &DareSolution, dist: &InitialDistribution) -> Result<f64> {
    dist.quadratic_expectation(&sol.p)
}

/// Solves along an ascending grid, warm-starting each solve at the previous `P`.
pub fn gamma_sweep(problem: &LqrProblem, grid: &[f64]) -> Result<Vec<DareSolution>> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "gamma grid must be strictly increasing".into(),
        ));
    }
    let mut out: Vec<DareSolution> = Vec::with_capacity(grid.len());
    for &gamma in grid {
        let start = out
            .last()
            .map_or_else(|| problem.q().clone(), |s| s.p.clone());
        let sol = solve_dare_from(problem, gamma, &start).map_err(|e| Error::at_gamma(gamma, e))?;
        out.push(sol);
    }
    Ok(out)
}

/// Parameters `theta` with `pi_theta(x) = K* x`, by least squares over the probe grid
/// of `class`. Fails when the fit leaves a residual, i.e. the gain is not in the span.
pub fn optimal_theta(sol: &DareSolution, class: &PolicyClass) -> Result<DVector<f64>> {
    check_dim(
        "class state dimension",
        sol.k_star.ncols(),
        class.state_dim(),
    )?;
    check_dim(
        "class action dimension",
        sol.k_star.nrows(),
        class.action_dim(),
    )?;
    represent_linear(&sol.k_star, class)
}

/// Least-squares coordinates of `x -> K x` in the span of `class`.
pub fn represent_linear(k: &DMatrix<f64>, class: &PolicyClass) -> Result<DVector<f64>> {
    let m = class.action_dim();
    let d = class.len();
    let grid = class.probe_grid();
    let mut design = DMatrix::zeros(grid.len() * m, d);
    let mut target = DVector::zeros(grid.len() * m);
    for (j, x) in grid.iter().enumerate() {
        design
            .view_mut((j * m, 0), (m, d))
            .copy_from(&class.feature_matrix(x));
        target.rows_mut(j * m, m).copy_from(&(k * x));
    }
    let theta = design
        .clone()
        .svd(true, true)
        .solve(&target, 1e-14)
        .map_err(|_| Error::Singular("probe-grid design matrix"))?;
    let residual = (&design * &theta - &target).amax();
    let scale = 1.0 + target.amax();
    if residual > REPRESENTATION_TOL * scale {
        return Err(Error::NotRepresentable { residual });
    }
    Ok(theta)
}

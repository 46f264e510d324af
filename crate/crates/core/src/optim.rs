//! Exact policy gradients of the truncated discounted cost, finite-difference oracles,
//! Hessians at optimality and the inner descent loop.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::policy::{Policy, PolicyClass};
use crate::problem::{
    check_gamma, discounted_cost, evaluation_points, resolve_horizon, Horizon, InitialDistribution,
    LqrProblem, COST_GUARD, STATE_GUARD,
};
use crate::riccati::DareSolution;

/// States closer than this to a feature kink count as kink hits.
pub const KINK_HIT_TOL: f64 = 1e-9;
/// Step of the central-difference gradient oracle.
pub const FD_GRADIENT_STEP: f64 = 1e-6;
/// Step of the second-difference Hessian.
pub const FD_HESSIAN_STEP: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub grad: DVector<f64>,
    pub cost: f64,
    pub horizon_used: usize,
    /// Non-initial rollout states within [`KINK_HIT_TOL`] of a feature kink whose
    /// weighted action adjoint exceeds [`KINK_HIT_TOL`]. Kinks at the initial state do
    /// not affect the gradient since `x_0` does not depend on `theta`.
    pub kink_hits: usize,
}

/// Gradient of `E[C_T]` with respect to `theta`, by reverse accumulation through the
/// unrolled closed loop. Derivatives at kinks are right-hand derivatives.
pub fn cost_gradient(
    problem: &LqrProblem,
    policy: &Policy,
    dist: &InitialDistribution,
    gamma: f64,
    horizon: Horizon,
) -> Result<GradientReport> {
    check_gamma(gamma)?;
    check_dim(
        "policy state dimension",
        problem.state_dim(),
        policy.class.state_dim(),
    )?;
    check_dim(
        "policy action dimension",
        problem.input_dim(),
        policy.class.action_dim(),
    )?;
    check_dim(
        "initial distribution",
        problem.state_dim(),
        dist.state_dim(),
    )?;
    let steps = resolve_horizon(problem, policy, dist, gamma, horizon)?;
    let (a, b, q, r) = (problem.a(), problem.b(), problem.q(), problem.r());
    let at = a.transpose();
    let bt = b.transpose();

    let mut grad = DVector::zeros(policy.class.len());
    let mut cost = 0.0;
    let mut kink_hits = 0;
    let mut states = Vec::with_capacity(steps);
    let mut actions = Vec::with_capacity(steps);
    for (x0, weight) in evaluation_points(problem, policy, dist, steps) {
        states.clear();
        actions.clear();
        let mut x = x0;
        let mut discount = 1.0;
        let mut used = 0;
        for t in 0..steps {
            let u = policy.eval(&x);
            cost += weight * discount * problem.stage_cost(&x, &u);
            used = t + 1;
            discount *= gamma;
            let last = t + 1 == steps || discount == 0.0;
            let next = if last { None } else { Some(a * &x + b * &u) };
            states.push(x);
            actions.push(u);
            match next {
                None => break,
                Some(n) => {
                    let norm = n.norm();
                    if !norm.is_finite() || norm > STATE_GUARD {
                        return Err(Error::UnstableRollout { step: t + 1, norm });
                    }
                    x = n;
                }
            }
        }

        // lambda holds dC/dx_{t+1}; no cost is charged on the terminal state.
        let mut lambda = DVector::zeros(problem.state_dim());
        for t in (0..used).rev() {
            let (x, u) = (&states[t], &actions[t]);
            let w = gamma.powi(t as i32);
            let du = 2.0 * w * (r * u) + &bt * &lambda;
            grad += weight * policy.class.feature_matrix(x).transpose() * &du;
            if t > 0 {
                lambda = 2.0 * w * (q * x) + &at * &lambda + policy.jacobian(x).transpose() * &du;
                // a kink only matters when the adjoint passing through it is not negligible
                if weight * du.amax() > KINK_HIT_TOL
                    && policy
                        .class
                        .kink_distance(x)
                        .is_some_and(|d| d < KINK_HIT_TOL)
                {
                    kink_hits += 1;
                }
            }
        }
    }
    if !cost.is_finite() || cost > COST_GUARD {
        return Err(Error::UnstableCost { gamma, cost });
    }
    Ok(GradientReport {
        grad,
        cost,
        horizon_used: steps,
        kink_hits,
    })
}

/// Central differences `(f(theta + h e_k) - f(theta - h e_k)) / 2h` of any scalar function.
pub fn central_differences<F>(f: F, theta: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "difference step must be positive, got {h}"
        )));
    }
    let mut out = DVector::zeros(theta.len());
    let mut probe = theta.clone();
    for k in 0..theta.len() {
        probe[k] = theta[k] + h;
        let up = f(&probe)?;
        probe[k] = theta[k] - h;
        let down = f(&probe)?;
        probe[k] = theta[k];
        out[k] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// The truncated cost as a function of `theta` with the horizon frozen at its value
/// for `policy`, so that perturbed evaluations are comparable.
fn frozen_cost<'a>(
    problem: &'a LqrProblem,
    class: &'a PolicyClass,
    dist: &'a InitialDistribution,
    gamma: f64,
    steps: usize,
) -> impl Fn(&DVector<f64>) -> Result<f64> + 'a {
    move |theta| {
        let p = Policy::new(class.clone(), theta.clone())?;
        discounted_cost(problem, &p, dist, gamma, Horizon::Fixed(steps))
    }
}

/// Finite-difference oracle for [`cost_gradient`].
pub fn fd_gradient(
    problem: &LqrProblem,
    policy: &Policy,
    dist: &InitialDistribution,
    gamma: f64,
    horizon: Horizon,
    h: f64,
) -> Result<DVector<f64>> {
    let steps = resolve_horizon(problem, policy, dist, gamma, horizon)?;
    central_differences(
        frozen_cost(problem, &policy.class, dist, gamma, steps),
        &policy.theta,
        h,
    )
}

/// Symmetrized second-difference Hessian of the truncated cost with step [`FD_HESSIAN_STEP`].
pub fn hessian_at(
    problem: &LqrProblem,
    class: &PolicyClass,
    theta: &DVector<f64>,
    dist: &InitialDistribution,
    gamma: f64,
    horizon: Horizon,
) -> Result<DMatrix<f64>> {
    let policy = Policy::new(class.clone(), theta.clone())?;
    let steps = resolve_horizon(problem, &policy, dist, gamma, horizon)?;
    let cost = frozen_cost(problem, class, dist, gamma, steps);
    let h = FD_HESSIAN_STEP;
    let d = theta.len();
    let shifted = |moves: &[(usize, f64)]| {
        let mut t = theta.clone();
        for &(k, s) in moves {
            t[k] += s * h;
        }
        cost(&t)
    };
    let centre = cost(theta)?;
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        hess[(i, i)] = (shifted(&[(i, 1.0)])? - 2.0 * centre + shifted(&[(i, -1.0)])?) / (h * h);
        for j in 0..i {
            let v = (shifted(&[(i, 1.0), (j, 1.0)])?
                - shifted(&[(i, 1.0), (j, -1.0)])?
                - shifted(&[(i, -1.0), (j, 1.0)])?
                + shifted(&[(i, -1.0), (j, -1.0)])?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

/// Accumulates `E sum_t gamma^t Phi(x_t)' W_t Phi(x_t)` along the optimal closed loop.
fn feature_gram_series(
    problem: &LqrProblem,
    class: &PolicyClass,
    sol: &DareSolution,
    dist: &InitialDistribution,
    steps: usize,
    weight_at: impl Fn(usize) -> DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let feedback = sol.feedback();
    let d = class.len();
    let mut total = DMatrix::zeros(d, d);
    for (x0, w) in evaluation_points(problem, &feedback, dist, steps) {
        let traj = problem.rollout(&feedback, &x0, steps)?;
        let mut discount = 1.0;
        for (t, x) in traj.states[..steps].iter().enumerate() {
            let phi = class.feature_matrix(x);
            total += w * discount * phi.transpose() * weight_at(t) * &phi;
            discount *= sol.gamma;
            if discount == 0.0 {
                break;
            }
        }
    }
    Ok(total)
}

/// Hessian of the cost at the optimum from the advantage decomposition:
/// `2 E sum_t gamma^t Phi(x_t)' (R + gamma B'PB) Phi(x_t)` along the optimal trajectory.
pub fn hessian_series(
    problem: &LqrProblem,
    class: &PolicyClass,
    sol: &DareSolution,
    dist: &InitialDistribution,
    steps: usize,
) -> Result<DMatrix<f64>> {
    let weight = problem.r() + sol.gamma * problem.b().transpose() * &sol.p * problem.b();
    Ok(feature_gram_series(problem, class, sol, dist, steps, |_| weight.clone())? * 2.0)
}

/// Twice the matrix written as `Phi(x_0)' B'PB Phi(x_0) + sum_t gamma^t Phi(x_t)' R Phi(x_t)`.
/// It differs from [`hessian_series`] by the missing `gamma B'PB` weight at `t >= 1` and
/// the missing `gamma` at `t = 0`; kept to quantify that difference.
pub fn hessian_series_as_displayed(
    problem: &LqrProblem,
    class: &PolicyClass,
    sol: &DareSolution,
    dist: &InitialDistribution,
    steps: usize,
) -> Result<DMatrix<f64>> {
    let bpb = problem.b().transpose() * &sol.p * problem.b();
    let r = problem.r().clone();
    let first = &r + &bpb;
    Ok(feature_gram_series(problem, class, sol, dist, steps, |t| {
        if t == 0 {
            first.clone()
        } else {
            r.clone()
        }
    })? * 2.0)
}

fn default_step_size() -> f64 {
    1e-3
}

fn default_grad_tol() -> f64 {
    1e-4
}

fn default_max_iters() -> usize {
    100_000
}

fn default_log_every() -> usize {
    1
}

/// Settings of the inner descent loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgConfig {
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub horizon: Horizon,
    /// Record every this many iterations (the first and last are always kept).
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            step_size: default_step_size(),
            grad_tol: default_grad_tol(),
            max_iters: default_max_iters(),
            horizon: Horizon::default(),
            log_every: default_log_every(),
        }
    }
}

impl PgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument("step_size must be positive".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument("grad_tol must be positive".into()));
        }
        if self.max_iters == 0 || self.log_every == 0 {
            return Err(Error::InvalidArgument(
                "max_iters and log_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainRecord {
    pub iter: usize,
    pub gamma: f64,
    pub cost: f64,
    /// Max-norm of the gradient.
    pub grad_norm: f64,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    /// Gradient steps taken.
    pub iterations: usize,
    pub converged: bool,
    pub hit_iteration_cap: bool,
}

impl TrainLog {
    pub fn last(&self) -> Option<&TrainRecord> {
        self.records.last()
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.last().map(|r| r.cost)
    }
}

/// Gradient descent `theta <- theta - step * grad` at fixed `gamma` until the
/// max-norm of the gradient is at most `grad_tol` or the budget runs out.
pub fn pg_inner(
    problem: &LqrProblem,
    class: &PolicyClass,
    theta0: &DVector<f64>,
    dist: &InitialDistribution,
    gamma: f64,
    cfg: &PgConfig,
) -> Result<(DVector<f64>, TrainLog)> {
    cfg.validate()?;
    let mut policy = Policy::new(class.clone(), theta0.clone())?;
    let mut log = TrainLog::default();
    let mut last_cost = f64::NAN;
    let mut iter = 0;
    loop {
        let report = match cost_gradient(problem, &policy, dist, gamma, cfg.horizon) {
            Ok(r) if r.cost <= COST_GUARD => r,
            Ok(r) => return Err(diverged(iter, r.cost, log)),
            Err(e) if e.is_divergence() => {
                let cost = if iter == 0 { f64::INFINITY } else { last_cost };
                return Err(diverged(iter, cost, log));
            }
            Err(e) => return Err(e),
        };
        last_cost = report.cost;
        let grad_norm = report.grad.amax();
        let done = grad_norm <= cfg.grad_tol;
        let capped = !done && iter >= cfg.max_iters;
        if iter % cfg.log_every == 0 || done || capped {
            log.records.push(TrainRecord {
                iter,
                gamma,
                cost: report.cost,
                grad_norm,
                theta: policy.theta.iter().copied().collect(),
            });
        }
        if done || capped {
            log.iterations = iter;
            log.converged = done;
            log.hit_iteration_cap = capped;
            return Ok((policy.theta, log));
        }
        policy.theta -= cfg.step_size * &report.grad;
        iter += 1;
    }
}

fn diverged(iter: usize, cost: f64, mut log: TrainLog) -> Error {
    log.iterations = iter;
    Error::Divergence {
        iter,
        cost,
        log: Box::new(log),
    }
}

/// Least-squares slope of `ln(gap)` against the iteration index, negated, over the
/// strictly positive entries. `None` with fewer than two usable points.
pub fn fitted_decay_rate(gaps: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = gaps
        .iter()
        .enumerate()
        .filter(|(_, g)| **g > 0.0 && g.is_finite())
        .map(|(i, g)| (i as f64, g.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

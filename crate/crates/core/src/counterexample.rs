//! The two-point construction in which `theta = (0, 1)` is a strict local minimum of the
//! discounted cost over the class `{x, F(x)}` although the optimal policy is linear.
//!
//! Both atoms `x0` and `y0` sit on the descending branch of the large spike, so the
//! first step sends them exactly to the apexes of the two small tents at 1.5 and 1.8.
//! Any perturbation of `theta` moves at least one of these first steps off its apex,
//! which raises the cost at first order.

use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::{
    counterexample_f, make_counterexample_class, preimage_on_descending_spike, Policy, PolicyClass,
    OMEGA_0, SMALL_TENT_CENTERS, SMALL_TENT_WEIGHT, SPIKE_HALF_WIDTH, SPIKE_WEIGHT,
};
use crate::problem::{
    discounted_cost, Atom, Horizon, InitialDistribution, LqrProblem, UniformPart,
    DEFAULT_QUADRATURE_NODES,
};

/// Canonical discount factor and control cost (any `0 < R < gamma < 1` is admissible).
pub const REFERENCE_GAMMA: f64 = 0.5;
pub const REFERENCE_R: f64 = 0.25;
/// Half-width of the two small tents.
pub const REFERENCE_DELTA: f64 = 5e-4;
/// Episode length of the landscape and verification runs.
pub const EPISODE_STEPS: usize = 5;
/// Support of the uniform component of the initial measure.
pub const UNIFORM_SUPPORT: (f64, f64) = (-5.0, 5.0);

/// `x0`, the preimage of the first small-tent apex on the descending spike branch.
pub fn reference_x0() -> f64 {
    preimage_on_descending_spike(SMALL_TENT_CENTERS[0]).expect("apex lies in the spike range")
}

/// `y0`, the preimage of the second small-tent apex.
pub fn reference_y0() -> f64 {
    preimage_on_descending_spike(SMALL_TENT_CENTERS[1]).expect("apex lies in the spike range")
}

/// The trapped parameter vector.
pub fn trapped_theta() -> DVector<f64> {
    DVector::from_vec(vec![0.0, 1.0])
}

/// `x_{t+1} = u_t` with `Q = 1`; the optimal policy is identically zero.
pub fn counterexample_problem(r: f64) -> Result<LqrProblem> {
    LqrProblem::scalar(0.0, 1.0, 1.0, r)
}

/// `(A, B, Q, R) = (0.1, 1, 1, 0.1)`, the problem of the staircase experiment.
pub fn staircase_problem() -> LqrProblem {
    LqrProblem::scalar(0.1, 1.0, 1.0, 0.1).expect("valid scalar problem")
}

/// `(1 - eps)/2 delta_x0 + (1 - eps)/2 delta_y0 + eps U(-5, 5)`.
pub fn make_mu0(eps: f64, x0: f64, y0: f64) -> Result<InitialDistribution> {
    make_mu0_with_nodes(eps, x0, y0, DEFAULT_QUADRATURE_NODES)
}

pub fn make_mu0_with_nodes(
    eps: f64,
    x0: f64,
    y0: f64,
    nodes: usize,
) -> Result<InitialDistribution> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in [0, 1], got {eps}"
        )));
    }
    let atoms = if eps < 1.0 {
        [x0, y0]
            .iter()
            .map(|&x| Atom {
                state: DVector::from_element(1, x),
                weight: (1.0 - eps) / 2.0,
            })
            .collect()
    } else {
        Vec::new()
    };
    let uniform = (eps > 0.0).then_some(UniformPart {
        lower: UNIFORM_SUPPORT.0,
        upper: UNIFORM_SUPPORT.1,
        weight: eps,
        nodes,
    });
    InitialDistribution::new(atoms, uniform)
}

/// Problem, class and measure of the reference instantiation.
pub fn reference_setup(eps: f64) -> Result<(LqrProblem, PolicyClass, InitialDistribution)> {
    Ok((
        counterexample_problem(REFERENCE_R)?,
        make_counterexample_class(REFERENCE_DELTA)?,
        make_mu0(eps, reference_x0(), reference_y0())?,
    ))
}

/// Two double cones `{|z dtheta_0 + F(z) dtheta_1| <= alpha ||dtheta||_1}` around the
/// directions that leave the first step from `z` unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConeGeometry {
    pub x0: f64,
    pub y0: f64,
    pub fx0: f64,
    pub fy0: f64,
    /// Slope of the bisector between the two cone axes.
    pub m: f64,
    pub alpha: f64,
}

impl ConeGeometry {
    /// Cone geometry for two negative states with positive images. The points are
    /// swapped if needed so that `|x0|/F(x0) > |y0|/F(y0)`.
    pub fn new(x0: f64, y0: f64, fx0: f64, fy0: f64) -> Result<Self> {
        if !(x0 < 0.0 && y0 < 0.0 && fx0 > 0.0 && fy0 > 0.0) {
            return Err(Error::InvalidArgument(
                "cone geometry needs negative states with positive images".into(),
            ));
        }
        let (sx, sy) = (x0.abs() / fx0, y0.abs() / fy0);
        if (sx - sy).abs() <= 1e-12 * sx.max(sy) {
            return Err(Error::InvalidArgument("the two cone axes coincide".into()));
        }
        let (x0, y0, fx0, fy0) = if sx > sy {
            (x0, y0, fx0, fy0)
        } else {
            (y0, x0, fy0, fx0)
        };
        let r = x0.hypot(fx0) / y0.hypot(fy0);
        let m = (-r * y0 - x0) / (r * fy0 + fx0);
        let bound_x = (x0.abs() - m * fx0) / (1.0 + m);
        let bound_y = (m * fy0 - y0.abs()) / (1.0 + m);
        let alpha = 0.49 * bound_x.min(bound_y);
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "degenerate cone geometry (alpha = {alpha})"
            )));
        }
        Ok(Self {
            x0,
            y0,
            fx0,
            fy0,
            m,
            alpha,
        })
    }

    pub fn reference() -> Self {
        let (x0, y0) = (reference_x0(), reference_y0());
        Self::new(
            x0,
            y0,
            counterexample_f(REFERENCE_DELTA, x0),
            counterexample_f(REFERENCE_DELTA, y0),
        )
        .expect("reference geometry is valid")
    }

    /// `|z dtheta_0 + F(z) dtheta_1| / ||dtheta||_1` for the two branches.
    pub fn cone_ratios(&self, d: [f64; 2]) -> [f64; 2] {
        let l1 = d[0].abs() + d[1].abs();
        [
            (self.x0 * d[0] + self.fx0 * d[1]).abs() / l1,
            (self.y0 * d[0] + self.fy0 * d[1]).abs() / l1,
        ]
    }

    /// Whether `d` lies in the cone of the `x0` branch and of the `y0` branch.
    pub fn membership(&self, d: [f64; 2]) -> [bool; 2] {
        self.cone_ratios(d).map(|r| r <= self.alpha)
    }

    /// Unit directions (both signs) along which the first step from each atom is unchanged.
    pub fn axis_directions(&self) -> Vec<[f64; 2]> {
        [(self.x0, self.fx0), (self.y0, self.fy0)]
            .iter()
            .flat_map(|&(z, fz)| {
                let d = l1_normalize([fz, -z]);
                [d, [-d[0], -d[1]]]
            })
            .collect()
    }

    /// Unit directions on the boundary of either cone.
    pub fn boundary_directions(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        for (z, fz) in [(self.x0, self.fx0), (self.y0, self.fy0)] {
            for (s0, s1) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                // d = (s0 t, s1 (1 - t)) on one face of the unit ball
                let slope = z * s0 - fz * s1;
                for level in [self.alpha, -self.alpha] {
                    if slope == 0.0 {
                        continue;
                    }
                    let t = (level - fz * s1) / slope;
                    if (0.0..=1.0).contains(&t) {
                        out.push([s0 * t, s1 * (1.0 - t)]);
                    }
                }
            }
        }
        out
    }
}

fn l1_normalize(d: [f64; 2]) -> [f64; 2] {
    let n = d[0].abs() + d[1].abs();
    [d[0] / n, d[1] / n]
}

/// `n` equally spaced directions on the unit sphere of the 1-norm.
pub fn l1_directions(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            l1_normalize([phi.cos(), phi.sin()])
        })
        .collect()
}

/// Constants of the lower and upper bounds used in the local-minimum argument.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CounterexampleConstants {
    pub gamma: f64,
    pub r: f64,
    pub delta: f64,
    /// Lipschitz constant of `F` on `(-5, 5)`.
    pub l: f64,
    pub lpp: f64,
    pub lp: f64,
    pub k: f64,
    pub kprime: f64,
    pub eps_max: f64,
    /// Value of `F` at the first small-tent apex.
    pub z2: f64,
    /// Weight of the small tents.
    pub omega: f64,
}

/// Bound on the first-order trajectory term, `2 * 2.5 * 5`.
const FIRST_ORDER_TRAJECTORY_BOUND: f64 = 25.0;

/// Evaluates the constant chain. Requires `0 < R < gamma < 1`.
pub fn constants(
    gamma: f64,
    r: f64,
    delta: f64,
    geom: &ConeGeometry,
) -> Result<CounterexampleConstants> {
    if !(0.0 < r && r < gamma && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "constants need 0 < R < gamma < 1, got R = {r}, gamma = {gamma}"
        )));
    }
    if !(delta > 0.0 && delta <= SPIKE_HALF_WIDTH) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 0.1], got {delta}"
        )));
    }
    let w0 = OMEGA_0;
    let omega = SMALL_TENT_WEIGHT;
    let l = (w0.abs() + SPIKE_WEIGHT.abs()) / SPIKE_HALF_WIDTH;
    let z2 = counterexample_f(delta, SMALL_TENT_CENTERS[0]);
    let damping = 1.0 - gamma * w0 * w0;
    let lpp = (1.0 + r) * (l.powi(6) + gamma.powi(4) / damping) * FIRST_ORDER_TRAJECTORY_BOUND;
    let lp = gamma * lpp + 25.0 * r;
    let kprime = lp / (1.0 - gamma);
    let k = 2.0 * z2.abs() * gamma * gamma * (1.0 + r * w0 * w0) * omega * geom.alpha / damping;
    Ok(CounterexampleConstants {
        gamma,
        r,
        delta,
        l,
        lpp,
        lp,
        k,
        kprime,
        eps_max: eps_bound(k, kprime, delta),
        z2,
        omega,
    })
}

/// `K / (24 delta K' + K)`.
pub fn eps_bound(k: f64, kprime: f64, delta: f64) -> f64 {
    k / (24.0 * delta * kprime + k)
}

impl CounterexampleConstants {
    /// `(1 - eps)/2 * K/(12 delta) - eps K'`, the per-unit-norm lower bound on the
    /// cost increase; positive exactly when `eps < eps_max`.
    pub fn final_margin(&self, eps: f64) -> f64 {
        (1.0 - eps) / 2.0 * self.k / (12.0 * self.delta) - eps * self.kprime
    }

    /// `3 K / (4 delta)`, the first-order increase outside the cones.
    pub fn outside_cone_bound(&self) -> f64 {
        3.0 * self.k / (4.0 * self.delta)
    }
}

/// One branch of the smallness condition `delta <= |omega alpha| / (4 max(M0, M1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaCondition {
    pub z0: f64,
    /// First-step image, the apex of a small tent.
    pub a: f64,
    pub z2: f64,
    pub m0: f64,
    pub m1: f64,
    pub delta_limit: f64,
    pub satisfied: bool,
}

/// Evaluates the smallness condition on `delta` for both atoms.
pub fn delta_conditions(
    gamma: f64,
    r: f64,
    delta: f64,
    geom: &ConeGeometry,
) -> Vec<DeltaCondition> {
    let w0 = OMEGA_0;
    let omega = SMALL_TENT_WEIGHT;
    let damping = 1.0 - gamma * w0 * w0;
    let lift = 1.0 + r * w0 * w0;
    [(geom.x0, geom.fx0), (geom.y0, geom.fy0)]
        .iter()
        .map(|&(z0, a)| {
            let z2 = counterexample_f(delta, a);
            let m0 = 4.0
                * [
                    z2.abs(),
                    (w0 * a).abs(),
                    (z2.abs() * w0 * w0 * (gamma + r) / (lift * damping)).abs(),
                    (a * a * (gamma + r) * damping / (z2.abs() * gamma * gamma * lift)).abs(),
                ]
                .into_iter()
                .fold(0.0, f64::max);
            let m1 = 4.0
                * [
                    a.abs(),
                    (w0 * z0).abs(),
                    (z2 * w0 * (gamma + r) / (lift * damping)).abs(),
                    (a * z0 * (gamma + r) * damping / (z2 * gamma * gamma * lift)).abs(),
                ]
                .into_iter()
                .fold(0.0, f64::max);
            let delta_limit = (omega * geom.alpha).abs() / (4.0 * m0.max(m1));
            DeltaCondition {
                z0,
                a,
                z2,
                m0,
                m1,
                delta_limit,
                satisfied: delta <= delta_limit,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub dtheta: [f64; 2],
    pub delta_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantsSummary {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "Kprime")]
    pub kprime: f64,
    pub eps_max: f64,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub samples: usize,
    /// Smallest `dC / ||dtheta||_1` over all samples.
    pub min_ratio: f64,
    pub worst_direction: [f64; 2],
    pub worst_radius: f64,
    /// Smallest ratio over directions outside both cones.
    pub min_ratio_outside_cones: f64,
    /// Smallest ratio at the largest radius of the ladder.
    pub min_ratio_at_radius: f64,
    /// `3K / (4 delta)` and `K / (24 delta)`, reported for comparison only.
    pub outside_cone_bound: f64,
    pub final_display_bound: f64,
    pub constants: ConstantsSummary,
    pub delta_conditions: Vec<DeltaCondition>,
    /// Samples with `dC <= 0`.
    pub negative_samples: Vec<Sample>,
    pub horizon: usize,
}

impl VerifyReport {
    pub fn is_local_min(&self) -> bool {
        self.negative_samples.is_empty() && self.min_ratio > 0.0
    }
}

/// Radii `radius, radius/10, ...` (`count` of them).
pub fn radius_ladder(radius: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| radius * 10f64.powi(-(k as i32)))
        .collect()
}

/// Samples `C(theta + dtheta) - C(theta)` around the trapped point over equally spaced
/// directions, the cone axes and boundaries, and a ladder of `radii` radii.
#[allow(clippy::too_many_arguments)]
pub fn verify_local_min(
    problem: &LqrProblem,
    class: &PolicyClass,
    dist: &InitialDistribution,
    gamma: f64,
    radius: f64,
    n_directions: usize,
    radii: usize,
    horizon: Horizon,
) -> Result<VerifyReport> {
    if !(radius > 0.0) || n_directions == 0 || radii == 0 {
        return Err(Error::InvalidArgument(
            "radius, directions and radii must be positive".into(),
        ));
    }
    let delta = small_tent_delta(class)?;
    let x0 = reference_x0();
    let y0 = reference_y0();
    let geom = ConeGeometry::new(
        x0,
        y0,
        counterexample_f(delta, x0),
        counterexample_f(delta, y0),
    )?;
    let r = problem.r()[(0, 0)];
    let consts = constants(gamma, r, delta, &geom)?;

    let theta = trapped_theta();
    let base_policy = Policy::new(class.clone(), theta.clone())?;
    let steps = crate::problem::resolve_horizon(problem, &base_policy, dist, gamma, horizon)?;
    let cost_at = |t: &DVector<f64>| -> Result<f64> {
        discounted_cost(
            problem,
            &Policy::new(class.clone(), t.clone())?,
            dist,
            gamma,
            Horizon::Fixed(steps),
        )
    };
    let base = cost_at(&theta)?;

    let mut directions = l1_directions(n_directions);
    directions.extend(geom.axis_directions());
    directions.extend(geom.boundary_directions());

    let ladder = radius_ladder(radius, radii);
    let mut report = VerifyReport {
        samples: 0,
        min_ratio: f64::INFINITY,
        worst_direction: [0.0, 0.0],
        worst_radius: 0.0,
        min_ratio_outside_cones: f64::INFINITY,
        min_ratio_at_radius: f64::INFINITY,
        outside_cone_bound: consts.outside_cone_bound(),
        final_display_bound: consts.k / (24.0 * delta),
        constants: ConstantsSummary {
            k: consts.k,
            kprime: consts.kprime,
            eps_max: consts.eps_max,
            alpha: geom.alpha,
            m: geom.m,
        },
        delta_conditions: delta_conditions(gamma, r, delta, &geom),
        negative_samples: Vec::new(),
        horizon: steps,
    };
    for d in &directions {
        let inside = geom.membership(*d);
        for &rho in &ladder {
            let dtheta = [d[0] * rho, d[1] * rho];
            let shifted = &theta + DVector::from_column_slice(&dtheta);
            let dc = cost_at(&shifted)? - base;
            let ratio = dc / rho;
            report.samples += 1;
            if ratio < report.min_ratio {
                report.min_ratio = ratio;
                report.worst_direction = *d;
                report.worst_radius = rho;
            }
            if !inside[0] && !inside[1] {
                report.min_ratio_outside_cones = report.min_ratio_outside_cones.min(ratio);
            }
            if rho == radius {
                report.min_ratio_at_radius = report.min_ratio_at_radius.min(ratio);
            }
            if !(dc > 0.0) {
                report.negative_samples.push(Sample {
                    dtheta,
                    delta_cost: dc,
                });
            }
        }
    }
    Ok(report)
}

/// Half-width of the small tents of a counterexample class.
fn small_tent_delta(class: &PolicyClass) -> Result<f64> {
    use crate::policy::BasisFunction;
    let not_ce = || Error::InvalidArgument("expected the counterexample class {x, F(x)}".into());
    if class.len() != 2 || class.state_dim() != 1 {
        return Err(not_ce());
    }
    match &class.bases()[1] {
        BasisFunction::Composite { terms } => terms
            .iter()
            .find_map(|t| match t.basis {
                BasisFunction::Tent { center, delta } if center == SMALL_TENT_CENTERS[0] => {
                    Some(delta)
                }
                _ => None,
            })
            .ok_or_else(not_ce),
        _ => Err(not_ce()),
    }
}

/// Costs on a regular grid around `center`, stored row-major with `theta0` as the
/// slow index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Landscape {
    pub theta0: Vec<f64>,
    pub theta1: Vec<f64>,
    pub costs: Vec<f64>,
}

impl Landscape {
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.theta1.len() + j]
    }

    /// Grid indices of the smallest cost (first one in row-major order on ties).
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, c) in self.costs.iter().enumerate() {
            if *c < self.costs[best] {
                best = k;
            }
        }
        (best / self.theta1.len(), best % self.theta1.len())
    }

    pub fn center(&self) -> (usize, usize) {
        (self.theta0.len() / 2, self.theta1.len() / 2)
    }

    /// Writes `theta0,theta1,cost` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["theta0", "theta1", "cost"])?;
        for (i, t0) in self.theta0.iter().enumerate() {
            for (j, t1) in self.theta1.iter().enumerate() {
                w.write_record([t0.to_string(), t1.to_string(), self.cost(i, j).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the cost on a `resolution x resolution` grid spanning
/// `center +- half_widths`.
pub fn landscape_grid(
    problem: &LqrProblem,
    class: &PolicyClass,
    dist: &InitialDistribution,
    gamma: f64,
    center: [f64; 2],
    half_widths: [f64; 2],
    resolution: usize,
    horizon: Horizon,
) -> Result<Landscape> {
    if resolution < 3 {
        return Err(Error::InvalidArgument(
            "landscape resolution must be at least 3".into(),
        ));
    }
    if class.len() != 2 {
        return Err(Error::InvalidArgument(
            "landscapes need a two-parameter class".into(),
        ));
    }
    let axis = |c: f64, h: f64| -> Vec<f64> {
        (0..resolution)
            .map(|k| c - h + 2.0 * h * k as f64 / (resolution - 1) as f64)
            .collect()
    };
    let theta0 = axis(center[0], half_widths[0]);
    let theta1 = axis(center[1], half_widths[1]);
    let mut costs = Vec::with_capacity(resolution * resolution);
    for t0 in &theta0 {
        for t1 in &theta1 {
            let policy = Policy::new(class.clone(), DVector::from_vec(vec![*t0, *t1]))?;
            costs.push(discounted_cost(problem, &policy, dist, gamma, horizon)?);
        }
    }
    Ok(Landscape {
        theta0,
        theta1,
        costs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformBoundReport {
    pub samples: usize,
    /// Largest `|int dC dU(-5, 5)| / ||dtheta||_1` over the samples.
    pub estimate: f64,
    pub kprime: f64,
    pub within_bound: bool,
}

/// Estimates the cost change under the uniform part alone, per unit `||dtheta||_1`,
/// at `n_samples` directions and radius `radius`, and compares it with `K'`.
pub fn uniform_part_bound_check(
    problem: &LqrProblem,
    class: &PolicyClass,
    gamma: f64,
    n_samples: usize,
    radius: f64,
) -> Result<UniformBoundReport> {
    let delta = small_tent_delta(class)?;
    let r = problem.r()[(0, 0)];
    let consts = constants(gamma, r, delta, &ConeGeometry::reference())?;
    let dist = InitialDistribution::uniform(
        UNIFORM_SUPPORT.0,
        UNIFORM_SUPPORT.1,
        DEFAULT_QUADRATURE_NODES,
    )?;
    let theta = trapped_theta();
    let base_policy = Policy::new(class.clone(), theta.clone())?;
    let steps =
        crate::problem::resolve_horizon(problem, &base_policy, &dist, gamma, Horizon::default())?;
    let base = discounted_cost(problem, &base_policy, &dist, gamma, Horizon::Fixed(steps))?;
    let mut estimate: f64 = 0.0;
    for d in l1_directions(n_samples) {
        let shifted = &theta + DVector::from_vec(vec![d[0] * radius, d[1] * radius]);
        let policy = Policy::new(class.clone(), shifted)?;
        let dc = discounted_cost(problem, &policy, &dist, gamma, Horizon::Fixed(steps))? - base;
        estimate = estimate.max(dc.abs() / radius);
    }
    Ok(UniformBoundReport {
        samples: n_samples,
        estimate,
        kprime: consts.kprime,
        within_bound: estimate <= consts.kprime,
    })
}

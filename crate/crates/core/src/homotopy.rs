//! Discount-factor continuation: solve at a small discount, then repeatedly raise it and
//! warm-start policy gradient from the previous exit point.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{pg_inner, PgConfig, TrainLog};
use crate::policy::PolicyClass;
use crate::problem::{InitialDistribution, LqrProblem};
use crate::riccati::{optimal_cost, optimal_theta, solve_dare, solve_dare_from};

/// Default largest discount factor of a schedule.
pub const DEFAULT_GAMMA_MAX: f64 = 0.98;
/// Default spacing of the arithmetic schedule.
pub const DEFAULT_GAMMA_STEP: f64 = 0.02;

/// When the outer loop moves to the next discount factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AdvanceRule {
    /// Advance after exactly this many gradient steps per stage.
    FixedGrid { iters_per_stage: usize },
    /// Advance once every partial derivative is below `tol` in absolute value.
    GradTolTrigger { tol: f64 },
}

impl Default for AdvanceRule {
    fn default() -> Self {
        AdvanceRule::GradTolTrigger { tol: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleDoc", into = "ScheduleDoc")]
pub struct HomotopySchedule {
    gammas: Vec<f64>,
    advance_rule: AdvanceRule,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleDoc {
    #[serde(default)]
    gammas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_max: Option<f64>,
    #[serde(default)]
    advance_rule: AdvanceRule,
}

impl TryFrom<ScheduleDoc> for HomotopySchedule {
    type Error = Error;

    fn try_from(doc: ScheduleDoc) -> Result<Self> {
        let schedule = match doc.gammas {
            Some(g) => {
                if doc.step.is_some() || doc.gamma_max.is_some() {
                    return Err(Error::InvalidArgument(
                        "give either an explicit gamma list or step/gamma_max, not both".into(),
                    ));
                }
                HomotopySchedule::new(g)?
            }
            None => HomotopySchedule::arithmetic(
                doc.step.unwrap_or(DEFAULT_GAMMA_STEP),
                doc.gamma_max.unwrap_or(DEFAULT_GAMMA_MAX),
            )?,
        };
        Ok(schedule.with_rule(doc.advance_rule))
    }
}

impl From<HomotopySchedule> for ScheduleDoc {
    fn from(s: HomotopySchedule) -> Self {
        ScheduleDoc {
            gammas: Some(s.gammas),
            step: None,
            gamma_max: None,
            advance_rule: s.advance_rule,
        }
    }
}

impl Default for HomotopySchedule {
    fn default() -> Self {
        Self::arithmetic(DEFAULT_GAMMA_STEP, DEFAULT_GAMMA_MAX).expect("valid default schedule")
    }
}

impl HomotopySchedule {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::InvalidArgument(
                "schedule has no discount factors".into(),
            ));
        }
        if gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::InvalidArgument(
                "discount factors must lie in [0, 1]".into(),
            ));
        }
        if gammas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "discount factors must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            gammas,
            advance_rule: AdvanceRule::default(),
        })
    }

    /// `0, step, 2 step, ...` up to `gamma_max`.
    pub fn arithmetic(step: f64, gamma_max: f64) -> Result<Self> {
        if !(step > 0.0) || !(0.0..=1.0).contains(&gamma_max) {
            return Err(Error::InvalidArgument(format!(
                "arithmetic schedule needs step > 0 and gamma_max in [0, 1], got {step}, {gamma_max}"
            )));
        }
        let count = (gamma_max / step + 1e-9).floor() as usize;
        Self::new(
            (0..=count)
                .map(|k| (k as f64 * step).min(gamma_max))
                .collect(),
        )
    }

    /// Schedule whose increments come from [`propose_gamma_step`].
    pub fn adaptive(
        problem: &LqrProblem,
        class: &PolicyClass,
        trust: f64,
        resolution: f64,
        gamma_max: f64,
    ) -> Result<Self> {
        let mut gammas = vec![0.0];
        let mut gamma = 0.0;
        while gamma < gamma_max {
            let step = propose_gamma_step(problem, class, gamma, trust, resolution)?;
            if step <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "no admissible discount increment at gamma = {gamma} with trust {trust}"
                )));
            }
            gamma = snap(gamma + step, resolution).min(gamma_max);
            gammas.push(gamma);
        }
        Self::new(gammas)
    }

    pub fn with_rule(mut self, rule: AdvanceRule) -> Self {
        self.advance_rule = rule;
        self
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn advance_rule(&self) -> AdvanceRule {
        self.advance_rule
    }

    pub fn gamma_max(&self) -> f64 {
        *self.gammas.last().expect("non-empty schedule")
    }
}

fn snap(value: f64, resolution: f64) -> f64 {
    (value / resolution).round() * resolution
}

/// Largest multiple `k * resolution` of the increment, within `[0, 1 - gamma]`, such
/// that the optimal parameters move by at most `trust` (Euclidean norm). Found by
/// bisection over `k`; discount factors whose Riccati solve fails are not admissible.
/// Returns `0` when even one grid step is too large.
pub fn propose_gamma_step(
    problem: &LqrProblem,
    class: &PolicyClass,
    gamma: f64,
    trust: f64,
    resolution: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in [0, 1), got {gamma}"
        )));
    }
    if !(resolution > 0.0) || !(trust >= 0.0) {
        return Err(Error::InvalidArgument(
            "trust must be >= 0 and resolution > 0".into(),
        ));
    }
    let base = solve_dare(problem, gamma)?;
    let theta = optimal_theta(&base, class)?;
    let admissible = |k: usize| -> bool {
        let next = (gamma + k as f64 * resolution).min(1.0);
        solve_dare_from(problem, next, &base.p)
            .and_then(|sol| optimal_theta(&sol, class))
            .is_ok_and(|t| (t - &theta).norm() <= trust)
    };
    let k_max = ((1.0 - gamma) / resolution + 1e-9).floor() as usize;
    if k_max == 0 || !admissible(1) {
        return Ok(0.0);
    }
    if admissible(k_max) {
        return Ok(k_max as f64 * resolution);
    }
    let (mut lo, mut hi) = (1, k_max);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if admissible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo as f64 * resolution)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: usize,
    pub gamma: f64,
    pub iterations_used: usize,
    pub theta_at_exit: Vec<f64>,
    pub cost_at_exit: f64,
    pub oracle_optimal_cost: f64,
    pub gap: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct HomotopyLog {
    pub stages: Vec<StageRecord>,
    /// Inner logs, one per stage.
    #[serde(skip)]
    pub inner: Vec<TrainLog>,
    /// False when the final stage ran out of iterations.
    pub complete: bool,
}

impl HomotopyLog {
    pub fn final_stage(&self) -> Option<&StageRecord> {
        self.stages.last()
    }

    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations_used).sum()
    }
}

fn stage_config(cfg: &PgConfig, rule: AdvanceRule) -> PgConfig {
    match rule {
        AdvanceRule::FixedGrid { iters_per_stage } => PgConfig {
            max_iters: iters_per_stage,
            grad_tol: f64::MIN_POSITIVE,
            ..cfg.clone()
        },
        AdvanceRule::GradTolTrigger { tol } => PgConfig {
            grad_tol: tol,
            ..cfg.clone()
        },
    }
}

/// Runs the inner descent at each discount factor of `schedule` in order, starting
/// each stage where the previous one stopped.
pub fn run_homotopy(
    problem: &LqrProblem,
    class: &PolicyClass,
    theta0: &DVector<f64>,
    dist: &InitialDistribution,
    schedule: &HomotopySchedule,
    cfg: &PgConfig,
) -> Result<HomotopyLog> {
    let stage_cfg = stage_config(cfg, schedule.advance_rule());
    let mut log = HomotopyLog::default();
    let mut theta = theta0.clone();
    let mut previous_p = problem.q().clone();
    for (stage, &gamma) in schedule.gammas().iter().enumerate() {
        let tag = |e: Error| Error::Stage {
            stage,
            gamma,
            source: Box::new(e),
        };
        let sol = solve_dare_from(problem, gamma, &previous_p).map_err(tag)?;
        if gamma >= 1.0 {
            let radius = sol.closed_loop_radius(problem);
            if !(radius < 1.0) {
                return Err(tag(Error::InvalidArgument(format!(
                    "undiscounted stage requires a stable optimal closed loop (spectral radius {radius})"
                ))));
            }
        }
        let oracle = optimal_cost(&sol, dist).map_err(tag)?;
        previous_p = sol.p;
        let (next, inner) =
            pg_inner(problem, class, &theta, dist, gamma, &stage_cfg).map_err(tag)?;
        let last = inner.last().expect("pg_inner logs its exit");
        log.stages.push(StageRecord {
            stage,
            gamma,
            iterations_used: inner.iterations,
            theta_at_exit: next.iter().copied().collect(),
            cost_at_exit: last.cost,
            oracle_optimal_cost: oracle,
            gap: last.cost - oracle,
            converged: inner.converged,
        });
        log.complete = !inner.hit_iteration_cap
            || matches!(schedule.advance_rule(), AdvanceRule::FixedGrid { .. });
        log.inner.push(inner);
        theta = next;
    }
    Ok(log)
}

/// Policy gradient at a single fixed discount factor.
pub fn run_vanilla(
    problem: &LqrProblem,
    class: &PolicyClass,
    theta0: &DVector<f64>,
    dist: &InitialDistribution,
    gamma: f64,
    cfg: &PgConfig,
) -> Result<TrainLog> {
    pg_inner(problem, class, theta0, dist, gamma, cfg).map(|(_, log)| log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::make_counterexample_class;
    use crate::problem::Horizon;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn arithmetic_schedule_endpoints() {
        let s = HomotopySchedule::arithmetic(0.02, 0.98).unwrap();
        assert_eq!(s.gammas().len(), 50);
        assert_eq!(s.gammas()[0], 0.0);
        assert!((s.gamma_max() - 0.98).abs() < 1e-12);
        assert!(HomotopySchedule::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(HomotopySchedule::new(vec![0.0, 1.2]).is_err());
    }

    #[test]
    fn schedule_json_forms() {
        let s: HomotopySchedule = serde_json::from_str(
            r#"{"step":0.25,"gamma_max":0.5,"advance_rule":{"grad_tol_trigger":{"tol":1e-3}}}"#,
        )
        .unwrap();
        assert_eq!(s.gammas(), &[0.0, 0.25, 0.5]);
        assert_eq!(s.advance_rule(), AdvanceRule::GradTolTrigger { tol: 1e-3 });
        let back: HomotopySchedule =
            serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(
            serde_json::from_str::<HomotopySchedule>(r#"{"gammas":[0.1],"step":0.1}"#).is_err()
        );
    }

    #[test]
    fn zero_dynamics_allow_the_whole_range() {
        let problem = LqrProblem::scalar(0.0, 1.0, 1.0, 0.25).unwrap();
        let class = make_counterexample_class(5e-4).unwrap();
        let step = propose_gamma_step(&problem, &class, 0.3, 1e-6, 0.01).unwrap();
        assert!((step - 0.7).abs() < 1e-12);
    }

    #[test]
    fn increments_shrink_with_trust() {
        let problem = LqrProblem::scalar(0.1, 1.0, 1.0, 0.1).unwrap();
        let class = make_counterexample_class(5e-4).unwrap();
        for gamma in [0.0, 0.3, 0.6, 0.9] {
            assert!(propose_gamma_step(&problem, &class, gamma, 0.05, 0.01).unwrap() >= 0.02);
        }
        let mut last = f64::INFINITY;
        for trust in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let step = propose_gamma_step(&problem, &class, 0.5, trust, 1e-4).unwrap();
            assert!(step <= last);
            last = step;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn single_stage_schedule_solves_the_myopic_problem() {
        let problem = LqrProblem::scalar(0.0, 1.0, 1.0, 0.25).unwrap();
        let class = make_counterexample_class(5e-4).unwrap();
        let dist = InitialDistribution::uniform(-5.0, 5.0, 64).unwrap();
        let schedule = HomotopySchedule::new(vec![0.0])
            .unwrap()
            .with_rule(AdvanceRule::GradTolTrigger { tol: 1e-8 });
        let cfg = PgConfig {
            step_size: 0.05,
            ..PgConfig::default()
        };
        let log = run_homotopy(&problem, &class, &v(&[1.0, -1.0]), &dist, &schedule, &cfg).unwrap();
        assert_eq!(log.stages.len(), 1);
        let exit = v(&log.stages[0].theta_at_exit);
        assert!(exit.norm() < 1e-6);
        assert!(log.complete);
    }

    #[test]
    fn fixed_grid_runs_exact_budget() {
        let problem = LqrProblem::scalar(0.1, 1.0, 1.0, 0.1).unwrap();
        let class = PolicyClass::linear(1, 1).unwrap();
        let dist = InitialDistribution::dirac(v(&[1.0])).unwrap();
        let schedule = HomotopySchedule::new(vec![0.0, 0.5])
            .unwrap()
            .with_rule(AdvanceRule::FixedGrid { iters_per_stage: 7 });
        let cfg = PgConfig {
            horizon: Horizon::Fixed(5),
            ..PgConfig::default()
        };
        let log = run_homotopy(&problem, &class, &v(&[0.3]), &dist, &schedule, &cfg).unwrap();
        assert!(log.stages.iter().all(|s| s.iterations_used == 7));
        assert_eq!(log.inner.len(), 2);
    }

    #[test]
    fn oracle_costs_increase_along_the_schedule() {
        let problem = LqrProblem::scalar(0.1, 1.0, 1.0, 0.1).unwrap();
        let class = make_counterexample_class(5e-4).unwrap();
        let dist = InitialDistribution::dirac(v(&[-1.5])).unwrap();
        let schedule = HomotopySchedule::arithmetic(0.1, 0.9).unwrap();
        let log = run_homotopy(
            &problem,
            &class,
            &v(&[0.0, 0.0]),
            &dist,
            &schedule,
            &PgConfig::default(),
        )
        .unwrap();
        for w in log.stages.windows(2) {
            assert!(w[1].oracle_optimal_cost >= w[0].oracle_optimal_cost);
        }
        let last = log.final_stage().unwrap();
        assert!(last.gap.abs() < 1e-4 * (1.0 + last.oracle_optimal_cost));
    }
}

//! File-driven experiments: JSON configuration in, CSV and JSON results out.
//!
//! Every subcommand of the command-line tool is a function here taking a parsed
//! [`ExperimentConfig`] and an output directory. Failures carry the process exit code
//! they map to.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::counterexample::{
    self, landscape_grid, make_mu0_with_nodes, verify_local_min, VerifyReport,
};
use crate::error::Error;
use crate::homotopy::{run_homotopy, run_vanilla, HomotopySchedule, StageRecord};
use crate::optim::{cost_gradient, fd_gradient, PgConfig, TrainLog, FD_GRADIENT_STEP};
use crate::policy::{
    make_counterexample_class, make_random_features_class, BasisFunction, Policy, PolicyClass,
};
use crate::problem::{Horizon, InitialDistribution, LqrProblem, DEFAULT_QUADRATURE_NODES};
use crate::riccati::{gamma_sweep, optimal_cost, solve_dare};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DARE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_FINDING: i32 = 4;

/// A failed command together with the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("Riccati solver failed: {0}")]
    Dare(#[source] Error),
    #[error("training diverged: {0}")]
    Divergence(#[source] Error),
    #[error("verification found {count} non-positive cost changes (worst dtheta = {worst:?})")]
    Finding { count: usize, worst: [f64; 2] },
    #[error("gradient check: max relative error {max_rel_err:e} exceeds {rel_tol:e}")]
    GradientMismatch { max_rel_err: f64, rel_tol: f64 },
    #[error(transparent)]
    Other(Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config { .. } | CommandError::Other(_) => EXIT_CONFIG,
            CommandError::Dare(_) => EXIT_DARE,
            CommandError::Divergence(_) => EXIT_DIVERGENCE,
            CommandError::Finding { .. } | CommandError::GradientMismatch { .. } => EXIT_FINDING,
        }
    }

    fn config(path: &str, message: impl Into<String>) -> Self {
        CommandError::Config {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        if e.is_dare_failure() {
            CommandError::Dare(e)
        } else if e.is_divergence() {
            CommandError::Divergence(e)
        } else {
            CommandError::Other(e)
        }
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Other(e.into())
    }
}

impl From<csv::Error> for CommandError {
    fn from(e: csv::Error) -> Self {
        CommandError::Other(e.into())
    }
}

impl From<serde_json::Error> for CommandError {
    fn from(e: serde_json::Error) -> Self {
        CommandError::Other(e.into())
    }
}

pub type CommandResult<T = ()> = std::result::Result<T, CommandError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Homotopy,
    Vanilla,
    Dare,
    Landscape,
    Verify,
    Gradcheck,
}

/// Which policy class to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassConfig {
    /// `{x, F(x)}` with small tents of half-width `delta`.
    Counterexample { delta: f64 },
    /// The matrix units, `theta` = row-major gain.
    Linear {},
    /// `2n` ReLU features drawn from the experiment seed.
    RandomFeatures {},
    /// Explicit list of features.
    Custom { bases: Vec<BasisFunction> },
}

/// The two-atom measure plus an `eps`-weighted uniform component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mu0Config {
    pub eps: f64,
    #[serde(default = "counterexample::reference_x0")]
    pub x0: f64,
    #[serde(default = "counterexample::reference_y0")]
    pub y0: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    #[serde(default = "default_center")]
    pub center: [f64; 2],
    pub half_widths: [f64; 2],
    pub resolution: usize,
    #[serde(default = "episode_horizon")]
    pub horizon: Horizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_radii")]
    pub radii: usize,
    #[serde(default = "episode_horizon")]
    pub horizon: Horizon,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            radius: default_radius(),
            directions: default_directions(),
            radii: default_radii(),
            horizon: episode_horizon(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    #[serde(default = "default_points")]
    pub points: usize,
    pub gammas: Vec<f64>,
    /// Parameters are drawn uniformly from `center +- box_half_width`.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "default_box")]
    pub box_half_width: f64,
    #[serde(default = "default_fd_step")]
    pub h: f64,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_center() -> [f64; 2] {
    [0.0, 1.0]
}
fn episode_horizon() -> Horizon {
    Horizon::Fixed(counterexample::EPISODE_STEPS)
}
fn default_radius() -> f64 {
    1e-4
}
fn default_directions() -> usize {
    360
}
fn default_radii() -> usize {
    6
}
fn default_points() -> usize {
    50
}
fn default_box() -> f64 {
    1.0
}
fn default_fd_step() -> f64 {
    FD_GRADIENT_STEP
}
fn default_rel_tol() -> f64 {
    1e-5
}

/// One experiment. Which fields are required depends on the subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: LqrProblem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<InitialDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Mu0Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub schedule: HomotopySchedule,
    #[serde(default)]
    pub pg: PgConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landscape: Option<LandscapeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradcheck: Option<GradcheckConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses a JSON document, reporting the path of the offending field on error.
    pub fn from_json(text: &str) -> CommandResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CommandError::config(
                if path.is_empty() { "." } else { &path },
                e.inner().to_string(),
            )
        })
    }

    pub fn from_path(path: &Path) -> CommandResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CommandError::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check_mode(&self, allowed: &[Mode]) -> CommandResult<Mode> {
        match self.mode {
            None => Ok(allowed[0]),
            Some(m) if allowed.contains(&m) => Ok(m),
            Some(m) => Err(CommandError::config(
                "mode",
                format!(
                    "mode `{m:?}` does not match this subcommand (expected one of {allowed:?})"
                ),
            )),
        }
    }

    fn gamma(&self) -> CommandResult<f64> {
        let g = self
            .gamma
            .ok_or_else(|| CommandError::config("gamma", "missing discount factor"))?;
        if !(0.0..=1.0).contains(&g) {
            return Err(CommandError::config(
                "gamma",
                format!("{g} is outside [0, 1]"),
            ));
        }
        Ok(g)
    }

    /// The policy class, drawing random features from `seed`.
    pub fn build_class(&self) -> CommandResult<PolicyClass> {
        let section = self
            .class
            .as_ref()
            .ok_or_else(|| CommandError::config("class", "missing policy class"))?;
        let (n, m) = (self.problem.state_dim(), self.problem.input_dim());
        let built = match section {
            ClassConfig::Counterexample { delta } => make_counterexample_class(*delta),
            ClassConfig::Linear {} => PolicyClass::linear(n, m),
            ClassConfig::RandomFeatures {} => make_random_features_class(n, self.seed),
            ClassConfig::Custom { bases } => PolicyClass::new(n, m, bases.clone()),
        };
        let class = built.map_err(|e| CommandError::config("class", e.to_string()))?;
        if class.state_dim() != n || class.action_dim() != m {
            return Err(CommandError::config(
                "class",
                format!(
                    "class maps {}-vectors to {}-vectors but the problem has n = {n}, m = {m}",
                    class.state_dim(),
                    class.action_dim()
                ),
            ));
        }
        Ok(class)
    }

    /// The initial distribution, from `dist` or `mu0` (exactly one must be given).
    pub fn build_dist(&self) -> CommandResult<InitialDistribution> {
        let dist = match (&self.dist, &self.mu0) {
            (Some(d), None) => d.clone(),
            (None, Some(mu)) => make_mu0_with_nodes(mu.eps, mu.x0, mu.y0, mu.nodes)
                .map_err(|e| CommandError::config("mu0", e.to_string()))?,
            (Some(_), Some(_)) => {
                return Err(CommandError::config(
                    "dist",
                    "give either `dist` or `mu0`, not both",
                ))
            }
            (None, None) => {
                return Err(CommandError::config("dist", "missing initial distribution"))
            }
        };
        if dist.state_dim() != self.problem.state_dim() {
            return Err(CommandError::config(
                "dist",
                format!(
                    "states have dimension {}, problem has {}",
                    dist.state_dim(),
                    self.problem.state_dim()
                ),
            ));
        }
        Ok(dist)
    }

    fn theta0(&self, class: &PolicyClass) -> CommandResult<DVector<f64>> {
        let theta = match &self.theta0 {
            Some(t) => DVector::from_column_slice(t),
            None => DVector::zeros(class.len()),
        };
        if theta.len() != class.len() {
            return Err(CommandError::config(
                "theta0",
                format!("expected {} parameters, found {}", class.len(), theta.len()),
            ));
        }
        Ok(theta)
    }

    fn validate_pg(&self) -> CommandResult<()> {
        self.pg
            .validate()
            .map_err(|e| CommandError::config("pg", e.to_string()))
    }
}

fn prepare(out: &Path) -> CommandResult<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// Shortest round-trip decimal, with `-0` printed as `0`.
fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        x.to_string()
    }
}

fn matrix_headers(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| format!("{prefix}_{i}_{j}")))
        .collect()
}

/// Riccati sweep over the schedule's discount factors; writes `dare.csv`.
pub fn cmd_dare(cfg: &ExperimentConfig, out: &Path) -> CommandResult {
    cfg.check_mode(&[Mode::Dare])?;
    let dist = match (&cfg.dist, &cfg.mu0) {
        (None, None) => None,
        _ => Some(cfg.build_dist()?),
    };
    let sweep = gamma_sweep(&cfg.problem, cfg.schedule.gammas())?;
    prepare(out)?;
    let (n, m) = (cfg.problem.state_dim(), cfg.problem.input_dim());
    let mut w = csv::Writer::from_path(out.join("dare.csv"))?;
    let mut header = vec!["gamma".to_string()];
    header.extend(matrix_headers("P", n, n));
    header.extend(matrix_headers("K", m, n));
    header.push("residual".into());
    header.push("optimal_cost".into());
    w.write_record(&header)?;
    for sol in &sweep {
        let mut row = vec![num(sol.gamma)];
        row.extend(sol.p.transpose().iter().map(|&x| num(x)));
        row.extend(sol.k_star.transpose().iter().map(|&x| num(x)));
        row.push(num(sol.residual));
        row.push(match &dist {
            Some(d) => num(optimal_cost(sol, d)?),
            None => String::new(),
        });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSummary {
    pub mode: Mode,
    pub final_theta: Vec<f64>,
    pub final_gamma: f64,
    pub final_cost: f64,
    pub oracle_optimal_cost: f64,
    pub final_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stages: Vec<StageRecord>,
}

fn write_train_rows(path: &Path, d: usize, logs: &[(usize, &TrainLog)]) -> CommandResult {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["stage", "iter", "gamma", "cost", "grad_norm"]
        .map(String::from)
        .to_vec();
    header.extend((0..d).map(|k| format!("theta_{k}")));
    w.write_record(&header)?;
    for (stage, log) in logs {
        for r in &log.records {
            let mut row = vec![
                stage.to_string(),
                r.iter.to_string(),
                num(r.gamma),
                num(r.cost),
                num(r.grad_norm),
            ];
            row.extend(r.theta.iter().map(|&x| num(x)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Homotopy or fixed-discount training; writes `train.csv` and `summary.json`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> CommandResult<TrainSummary> {
    let mode = cfg.check_mode(&[Mode::Homotopy, Mode::Vanilla])?;
    cfg.validate_pg()?;
    let class = cfg.build_class()?;
    let dist = cfg.build_dist()?;
    let theta0 = cfg.theta0(&class)?;
    prepare(out)?;
    let summary = match mode {
        Mode::Homotopy => {
            let log =
                match run_homotopy(&cfg.problem, &class, &theta0, &dist, &cfg.schedule, &cfg.pg) {
                    Ok(log) => log,
                    Err(e) => {
                        write_partial_log(&e, class.len(), out)?;
                        return Err(e.into());
                    }
                };
            let logs: Vec<(usize, &TrainLog)> = log.inner.iter().enumerate().collect();
            write_train_rows(&out.join("train.csv"), class.len(), &logs)?;
            let last = log.final_stage().expect("schedule is non-empty");
            TrainSummary {
                mode,
                final_theta: last.theta_at_exit.clone(),
                final_gamma: last.gamma,
                final_cost: last.cost_at_exit,
                oracle_optimal_cost: last.oracle_optimal_cost,
                final_gap: last.gap,
                iterations: log.total_iterations(),
                converged: log.complete,
                stages: log.stages.clone(),
            }
        }
        _ => {
            let gamma = cfg.gamma()?;
            let oracle = optimal_cost(&solve_dare(&cfg.problem, gamma)?, &dist)?;
            let log = match run_vanilla(&cfg.problem, &class, &theta0, &dist, gamma, &cfg.pg) {
                Ok(log) => log,
                Err(e) => {
                    write_partial_log(&e, class.len(), out)?;
                    return Err(e.into());
                }
            };
            write_train_rows(&out.join("train.csv"), class.len(), &[(0, &log)])?;
            let last = log.last().expect("pg_inner logs its exit");
            TrainSummary {
                mode,
                final_theta: last.theta.clone(),
                final_gamma: gamma,
                final_cost: last.cost,
                oracle_optimal_cost: oracle,
                final_gap: last.cost - oracle,
                iterations: log.iterations,
                converged: log.converged,
                stages: Vec::new(),
            }
        }
    };
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

/// Keeps the rows recorded before a divergence.
fn write_partial_log(e: &Error, d: usize, out: &Path) -> CommandResult {
    let mut err = e;
    loop {
        match err {
            Error::Divergence { log, .. } => {
                return write_train_rows(&out.join("train.csv"), d, &[(0, log)])
            }
            Error::Stage { source, .. } | Error::AtGamma { source, .. } => err = source,
            _ => return Ok(()),
        }
    }
}

/// Cost grid around a parameter point; writes `landscape.csv`.
pub fn cmd_landscape(
    cfg: &ExperimentConfig,
    out: &Path,
) -> CommandResult<counterexample::Landscape> {
    cfg.check_mode(&[Mode::Landscape])?;
    let section = cfg
        .landscape
        .as_ref()
        .ok_or_else(|| CommandError::config("landscape", "missing section"))?;
    let class = cfg.build_class()?;
    let dist = cfg.build_dist()?;
    let gamma = cfg.gamma()?;
    let land = landscape_grid(
        &cfg.problem,
        &class,
        &dist,
        gamma,
        section.center,
        section.half_widths,
        section.resolution,
        section.horizon,
    )
    .map_err(|e| match e {
        Error::InvalidArgument(msg) => CommandError::config("landscape", msg),
        other => other.into(),
    })?;
    prepare(out)?;
    land.write_csv(&out.join("landscape.csv"))?;
    Ok(land)
}

/// Local-minimum verification at `theta = (0, 1)`; writes `verify.json`. A
/// non-positive cost change is reported as [`CommandError::Finding`].
pub fn cmd_verify(cfg: &ExperimentConfig, out: &Path) -> CommandResult<VerifyReport> {
    cfg.check_mode(&[Mode::Verify])?;
    let section = cfg.verify.clone().unwrap_or_default();
    let class = cfg.build_class()?;
    let dist = cfg.build_dist()?;
    let gamma = cfg.gamma()?;
    let report = verify_local_min(
        &cfg.problem,
        &class,
        &dist,
        gamma,
        section.radius,
        section.directions,
        section.radii,
        section.horizon,
    )
    .map_err(|e| match e {
        Error::InvalidArgument(msg) => CommandError::config("verify", msg),
        other => other.into(),
    })?;
    prepare(out)?;
    fs::write(
        out.join("verify.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    if !report.is_local_min() {
        let worst = report
            .negative_samples
            .iter()
            .min_by(|a, b| a.delta_cost.total_cmp(&b.delta_cost))
            .map_or(report.worst_direction, |s| s.dtheta);
        return Err(CommandError::Finding {
            count: report.negative_samples.len(),
            worst,
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckSummary {
    pub checked: usize,
    pub skipped_at_kinks: usize,
    pub max_rel_err: f64,
    pub rel_tol: f64,
    pub passed: bool,
}

/// Compares reverse-mode gradients with central differences at random parameters;
/// writes `gradcheck.csv` and `gradcheck.json`. Points whose rollouts touch a kink
/// are skipped and counted.
pub fn cmd_gradcheck(cfg: &ExperimentConfig, out: &Path) -> CommandResult<GradcheckSummary> {
    cfg.check_mode(&[Mode::Gradcheck])?;
    let section = cfg
        .gradcheck
        .as_ref()
        .ok_or_else(|| CommandError::config("gradcheck", "missing section"))?;
    if section.gammas.is_empty() || section.gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(CommandError::config(
            "gradcheck.gammas",
            "need discount factors in [0, 1]",
        ));
    }
    if !(section.h > 0.0) {
        return Err(CommandError::config(
            "gradcheck.h",
            "difference step must be positive",
        ));
    }
    let class = cfg.build_class()?;
    let dist = cfg.build_dist()?;
    let d = class.len();
    let center = match &section.center {
        Some(c) if c.len() == d => DVector::from_column_slice(c),
        Some(c) => {
            return Err(CommandError::config(
                "gradcheck.center",
                format!("expected {d} parameters, found {}", c.len()),
            ))
        }
        None => DVector::zeros(d),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    prepare(out)?;
    let mut w = csv::Writer::from_path(out.join("gradcheck.csv"))?;
    let mut header: Vec<String> = vec!["point".into(), "gamma".into()];
    header.extend((0..d).map(|k| format!("theta_{k}")));
    header.extend((0..d).map(|k| format!("grad_{k}")));
    header.extend((0..d).map(|k| format!("fd_{k}")));
    header.push("rel_err".into());
    w.write_record(&header)?;

    let mut summary = GradcheckSummary {
        checked: 0,
        skipped_at_kinks: 0,
        max_rel_err: 0.0,
        rel_tol: section.rel_tol,
        passed: true,
    };
    for &gamma in &section.gammas {
        let mut point = 0;
        let mut attempts = 0;
        while point < section.points {
            attempts += 1;
            if attempts > 100 * section.points {
                return Err(CommandError::config(
                    "gradcheck",
                    "could not find kink-free sample points",
                ));
            }
            let theta = DVector::from_fn(d, |k, _| {
                center[k] + rng.gen_range(-1.0..=1.0) * section.box_half_width
            });
            let policy = Policy::new(class.clone(), theta).map_err(CommandError::Other)?;
            let report = match cost_gradient(&cfg.problem, &policy, &dist, gamma, section.horizon) {
                Ok(r) => r,
                Err(e) if e.is_divergence() => continue,
                Err(e) => return Err(e.into()),
            };
            if report.kink_hits > 0 {
                summary.skipped_at_kinks += 1;
                continue;
            }
            let fd = fd_gradient(
                &cfg.problem,
                &policy,
                &dist,
                gamma,
                Horizon::Fixed(report.horizon_used),
                section.h,
            )?;
            let rel = relative_error(&report.grad, &fd);
            summary.max_rel_err = summary.max_rel_err.max(rel);
            summary.checked += 1;
            let mut row = vec![point.to_string(), num(gamma)];
            row.extend(policy.theta.iter().map(|&x| num(x)));
            row.extend(report.grad.iter().map(|&x| num(x)));
            row.extend(fd.iter().map(|&x| num(x)));
            row.push(num(rel));
            w.write_record(&row)?;
            point += 1;
        }
    }
    w.flush()?;
    summary.passed = summary.max_rel_err < section.rel_tol;
    fs::write(
        out.join("gradcheck.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

/// `||a - b||_inf / max(||a||_inf, ||b||_inf, 1e-12)`.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"problem":{"A":[[0.1]],"B":[[1]],"Q":[[1]],"R":[[0.1]]}}"#;

    #[test]
    fn field_path_in_config_errors() {
        let bad =
            r#"{"problem":{"A":[[0.1]],"B":[[1]],"Q":[[1]],"R":[[0.1]]},"pg":{"step_size":"big"}}"#;
        let err = ExperimentConfig::from_json(bad).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(err.to_string().contains("pg.step_size"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"problem":{"A":[[0.1]]}}"#).unwrap_err();
        assert!(err.to_string().contains("problem"), "{err}");
    }

    #[test]
    fn config_round_trip_is_idempotent() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let once = cfg.to_json();
        let twice = ExperimentConfig::from_json(&once).unwrap().to_json();
        assert_eq!(once, twice);
    }

    #[test]
    fn mode_must_match_subcommand() {
        let text = r#"{"problem":{"A":[[0.1]],"B":[[1]],"Q":[[1]],"R":[[0.1]]},"mode":"verify"}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_dare(&cfg, dir.path()).unwrap_err();
        assert!(err.to_string().contains("`mode`"));
    }

    #[test]
    fn dare_on_single_point_grid() {
        let text = r#"{"problem":{"A":[[0.1]],"B":[[1]],"Q":[[1]],"R":[[0.1]]},"schedule":{"gammas":[0.0]}}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        cmd_dare(&cfg, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("dare.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "gamma,P_0_0,K_0_0,residual,optimal_cost");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("0,1,0,"), "{}", lines[1]);
    }
}

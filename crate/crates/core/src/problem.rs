//! The discounted LQR environment: system matrices, rollouts under arbitrary
//! controllers, initial-state distributions and the truncated discounted cost.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::quadrature::composite_gauss_legendre;

/// A rollout is aborted once the state norm exceeds this value.
pub const STATE_GUARD: f64 = 1e9;
/// Costs above this value are reported as an unstable policy.
pub const COST_GUARD: f64 = 1e12;
/// Default tail tolerance of the automatic truncation horizon.
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;
/// Default number of Gauss–Legendre nodes for a uniform component.
pub const DEFAULT_QUADRATURE_NODES: usize = 512;
/// Longest horizon the automatic rule will produce.
pub const MAX_AUTO_HORIZON: usize = 200_000;

/// Deepest closed-loop level at which kinks of the policy are tracked back to the
/// initial state when building quadrature panels.
const KINK_DEPTH: usize = 10;
/// Upper bound on the number of quadrature panels produced by kink tracking.
const MAX_PANELS: usize = 4096;

const SYMMETRY_TOL: f64 = 1e-10;

/// Anything that maps a state to an action.
pub trait Controller {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn act(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Locations of non-differentiable points for scalar-state controllers.
    fn kinks_1d(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// The linear feedback `u = K x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFeedback {
    pub gain: DMatrix<f64>,
}

impl Controller for LinearFeedback {
    fn state_dim(&self) -> usize {
        self.gain.ncols()
    }

    fn input_dim(&self) -> usize {
        self.gain.nrows()
    }

    fn act(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * x
    }
}

/// `x_{t+1} = A x_t + B u_t` with stage cost `x'Qx + u'Ru`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemDoc", into = "ProblemDoc")]
pub struct LqrProblem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LqrProblem {
    /// Validates shapes, symmetry and definiteness of the costs, controllability of
    /// `(A, B)` and observability of `(A, D)` with `Q = D'D`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(Error::InvalidProblem("dimensions must be positive".into()));
        }
        check_shape("A", &a, n, n)?;
        check_shape("B", &b, n, m)?;
        check_shape("Q", &q, n, n)?;
        check_shape("R", &r, m, m)?;
        for (name, mat) in [("A", &a), ("B", &b), ("Q", &q), ("R", &r)] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidProblem(format!(
                    "{name} has non-finite entries"
                )));
            }
        }
        for (name, mat) in [("Q", &q), ("R", &r)] {
            let scale = mat.amax().max(1.0);
            if (mat - mat.transpose()).amax() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidProblem(format!("{name} is not symmetric")));
            }
        }
        if r.clone().cholesky().is_none() {
            return Err(Error::InvalidProblem("R is not positive definite".into()));
        }
        let q_chol = q
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidProblem("Q is not positive definite".into()))?;

        let ctrb = controllability_matrix(&a, &b);
        if numerical_rank(&ctrb) < n {
            return Err(Error::InvalidProblem("(A, B) is not controllable".into()));
        }
        let d = q_chol.l().transpose();
        let obsv = controllability_matrix(&a.transpose(), &d.transpose()).transpose();
        if numerical_rank(&obsv) < n {
            return Err(Error::InvalidProblem("(A, D) is not observable".into()));
        }
        Ok(Self { a, b, q, r })
    }

    /// Scalar system `x' = a x + b u` with costs `q x^2 + r u^2`.
    pub fn scalar(a: f64, b: f64, q: f64, r: f64) -> Result<Self> {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self::new(m(a), m(b), m(q), m(r))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// One step of the dynamics, `A x + B u`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("x", self.state_dim(), x.len())?;
        check_dim("u", self.input_dim(), u.len())?;
        Ok(&self.a * x + &self.b * u)
    }

    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.q.dot(&(x * x.transpose())) + self.r.dot(&(u * u.transpose()))
    }

    fn check_controller<C: Controller + ?Sized>(&self, policy: &C) -> Result<()> {
        check_dim(
            "policy state dimension",
            self.state_dim(),
            policy.state_dim(),
        )?;
        check_dim(
            "policy action dimension",
            self.input_dim(),
            policy.input_dim(),
        )
    }

    /// Unrolls the closed loop for `horizon` steps from `x0`.
    pub fn rollout<C: Controller + ?Sized>(
        &self,
        policy: &C,
        x0: &DVector<f64>,
        horizon: usize,
    ) -> Result<Trajectory> {
        if horizon == 0 {
            return Err(Error::InvalidArgument(
                "rollout horizon must be at least 1".into(),
            ));
        }
        self.check_controller(policy)?;
        check_dim("x0", self.state_dim(), x0.len())?;
        let mut states = Vec::with_capacity(horizon + 1);
        let mut actions = Vec::with_capacity(horizon);
        let mut x = x0.clone();
        for t in 0..horizon {
            let u = policy.act(&x);
            let next = &self.a * &x + &self.b * &u;
            states.push(x);
            actions.push(u);
            let norm = next.norm();
            if !norm.is_finite() || norm > STATE_GUARD {
                return Err(Error::UnstableRollout { step: t + 1, norm });
            }
            x = next;
        }
        states.push(x);
        Ok(Trajectory { states, actions })
    }

    /// `sum_{t<T} gamma^t (x_t'Qx_t + u_t'Ru_t)` from a single initial state.
    pub fn trajectory_cost<C: Controller + ?Sized>(
        &self,
        policy: &C,
        x0: &DVector<f64>,
        gamma: f64,
        horizon: usize,
    ) -> Result<f64> {
        let mut x = x0.clone();
        let mut discount = 1.0;
        let mut total = 0.0;
        for t in 0..horizon {
            let u = policy.act(&x);
            total += discount * self.stage_cost(&x, &u);
            discount *= gamma;
            if t + 1 == horizon || discount == 0.0 {
                break;
            }
            x = &self.a * &x + &self.b * &u;
            let norm = x.norm();
            if !norm.is_finite() || norm > STATE_GUARD {
                return Err(Error::UnstableRollout { step: t + 1, norm });
            }
        }
        Ok(total)
    }
}

fn check_shape(name: &'static str, mat: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if mat.nrows() == rows && mat.ncols() == cols {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            operand: name,
            expected: format!("{rows}x{cols}"),
            found: format!("{}x{}", mat.nrows(), mat.ncols()),
        })
    }
}

/// `[B, AB, ..., A^{n-1}B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

pub(crate) fn numerical_rank(mat: &DMatrix<f64>) -> usize {
    let svd = mat.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = smax * 1e-10 * mat.nrows().max(mat.ncols()) as f64;
    svd.singular_values.iter().filter(|s| **s > tol).count()
}

#[derive(Serialize, Deserialize)]
struct ProblemDoc {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
}

pub(crate) fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidProblem(format!(
            "{name} must be a non-empty rectangular array"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    mat.row_iter()
        .map(|r| r.iter().copied().collect())
        .collect()
}

impl TryFrom<ProblemDoc> for LqrProblem {
    type Error = Error;

    fn try_from(doc: ProblemDoc) -> Result<Self> {
        Self::new(
            matrix_from_rows("A", &doc.a)?,
            matrix_from_rows("B", &doc.b)?,
            matrix_from_rows("Q", &doc.q)?,
            matrix_from_rows("R", &doc.r)?,
        )
    }
}

impl From<LqrProblem> for ProblemDoc {
    fn from(p: LqrProblem) -> Self {
        Self {
            a: matrix_to_rows(&p.a),
            b: matrix_to_rows(&p.b),
            q: matrix_to_rows(&p.q),
            r: matrix_to_rows(&p.r),
        }
    }
}

/// States `x_0..x_T` and actions `u_0..u_{T-1}` of one rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub actions: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// Largest violation of `x_{t+1} = A x_t + B u_t` along the trajectory.
    pub fn dynamics_defect(&self, problem: &LqrProblem) -> f64 {
        self.actions
            .iter()
            .enumerate()
            .map(|(t, u)| {
                (&self.states[t + 1] - (problem.a() * &self.states[t] + problem.b() * u)).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn discounted_cost(&self, problem: &LqrProblem, gamma: f64) -> f64 {
        let mut discount = 1.0;
        let mut total = 0.0;
        for (x, u) in self.states.iter().zip(&self.actions) {
            total += discount * problem.stage_cost(x, u);
            discount *= gamma;
        }
        total
    }
}

/// Point mass of the initial-state distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub state: DVector<f64>,
    pub weight: f64,
}

/// Uniform density on `[lower, upper]` carrying total mass `weight` (scalar states only).
#[derive(Clone, Debug, PartialEq)]
pub struct UniformPart {
    pub lower: f64,
    pub upper: f64,
    pub weight: f64,
    pub nodes: usize,
}

/// Mixture of weighted point masses and an optional uniform component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistDoc", into = "DistDoc")]
pub struct InitialDistribution {
    atoms: Vec<Atom>,
    uniform: Option<UniformPart>,
}

impl InitialDistribution {
    pub fn new(atoms: Vec<Atom>, uniform: Option<UniformPart>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        if atoms.is_empty() && uniform.is_none() {
            return bad("distribution has no components".into());
        }
        let dim = atoms.first().map(|a| a.state.len());
        for atom in &atoms {
            if Some(atom.state.len()) != dim || atom.state.is_empty() {
                return bad("atoms have inconsistent dimensions".into());
            }
            if !(atom.weight >= 0.0) || atom.state.iter().any(|v| !v.is_finite()) {
                return bad("atom weights must be nonnegative and states finite".into());
            }
        }
        let mut total: f64 = atoms.iter().map(|a| a.weight).sum();
        if let Some(u) = &uniform {
            if dim.is_some_and(|d| d != 1) {
                return bad("a uniform component requires scalar states".into());
            }
            if !(u.lower < u.upper) || !u.lower.is_finite() || !u.upper.is_finite() {
                return bad("uniform component needs finite lower < upper".into());
            }
            if !(u.weight >= 0.0) {
                return bad("uniform weight must be nonnegative".into());
            }
            if u.nodes < 2 {
                return bad("uniform component needs at least 2 quadrature nodes".into());
            }
            total += u.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("weights sum to {total}, not 1"));
        }
        Ok(Self { atoms, uniform })
    }

    /// A single point mass.
    pub fn dirac(state: DVector<f64>) -> Result<Self> {
        Self::new(vec![Atom { state, weight: 1.0 }], None)
    }

    /// Uniform distribution on `[lower, upper]` for scalar states.
    pub fn uniform(lower: f64, upper: f64, nodes: usize) -> Result<Self> {
        Self::new(
            Vec::new(),
            Some(UniformPart {
                lower,
                upper,
                weight: 1.0,
                nodes,
            }),
        )
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn uniform_part(&self) -> Option<&UniformPart> {
        self.uniform.as_ref()
    }

    /// State dimension, `1` for a pure uniform distribution.
    pub fn state_dim(&self) -> usize {
        self.atoms.first().map_or(1, |a| a.state.len())
    }

    /// Same distribution with a different quadrature budget.
    pub fn with_nodes(&self, nodes: usize) -> Result<Self> {
        let uniform = self.uniform.clone().map(|u| UniformPart { nodes, ..u });
        Self::new(self.atoms.clone(), uniform)
    }

    /// Points of the support used to probe closed-loop behaviour.
    pub fn probe_states(&self) -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = self
            .atoms
            .iter()
            .filter(|a| a.weight > 0.0)
            .map(|a| a.state.clone())
            .collect();
        if let Some(u) = self.uniform.as_ref().filter(|u| u.weight > 0.0) {
            for k in 0..=8 {
                let x = u.lower + (u.upper - u.lower) * k as f64 / 8.0;
                out.push(DVector::from_element(1, x));
            }
        }
        out
    }

    /// Weighted evaluation points: the atoms followed by the uniform component's
    /// quadrature nodes. Nodes are placed on panels split at `breakpoints`.
    pub fn evaluation_points(&self, breakpoints: &[f64]) -> Vec<(DVector<f64>, f64)> {
        let mut out: Vec<(DVector<f64>, f64)> = self
            .atoms
            .iter()
            .filter(|a| a.weight > 0.0)
            .map(|a| (a.state.clone(), a.weight))
            .collect();
        if let Some(u) = self.uniform.as_ref().filter(|u| u.weight > 0.0) {
            let density = u.weight / (u.upper - u.lower);
            for (x, w) in composite_gauss_legendre(u.lower, u.upper, breakpoints, u.nodes) {
                out.push((DVector::from_element(1, x), w * density));
            }
        }
        out
    }

    /// `E[x' M x]`, exact for the atoms and the uniform part.
    pub fn quadratic_expectation(&self, m: &DMatrix<f64>) -> Result<f64> {
        check_dim("quadratic form", self.state_dim(), m.nrows())?;
        Ok(self
            .evaluation_points(&[])
            .iter()
            .map(|(x, w)| w * (x.transpose() * m * x)[(0, 0)])
            .sum())
    }
}

#[derive(Serialize, Deserialize)]
struct AtomDoc {
    x: Vec<f64>,
    w: f64,
}

#[derive(Serialize, Deserialize)]
struct UniformDoc {
    lo: f64,
    hi: f64,
    w: f64,
    #[serde(default = "default_nodes")]
    nodes: usize,
}

fn default_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

#[derive(Serialize, Deserialize)]
struct DistDoc {
    #[serde(default)]
    atoms: Vec<AtomDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uniform: Option<UniformDoc>,
}

impl TryFrom<DistDoc> for InitialDistribution {
    type Error = Error;

    fn try_from(doc: DistDoc) -> Result<Self> {
        let atoms = doc
            .atoms
            .into_iter()
            .map(|a| Atom {
                state: DVector::from_vec(a.x),
                weight: a.w,
            })
            .collect();
        let uniform = doc.uniform.map(|u| UniformPart {
            lower: u.lo,
            upper: u.hi,
            weight: u.w,
            nodes: u.nodes,
        });
        Self::new(atoms, uniform)
    }
}

impl From<InitialDistribution> for DistDoc {
    fn from(d: InitialDistribution) -> Self {
        Self {
            atoms: d
                .atoms
                .into_iter()
                .map(|a| AtomDoc {
                    x: a.state.iter().copied().collect(),
                    w: a.weight,
                })
                .collect(),
            uniform: d.uniform.map(|u| UniformDoc {
                lo: u.lower,
                hi: u.upper,
                w: u.weight,
                nodes: u.nodes,
            }),
        }
    }
}

/// Truncation horizon of the discounted sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Horizon {
    /// Exactly this many stage costs (the episodic mode uses 5).
    Fixed(usize),
    /// Long enough that the estimated discounted tail is below `tol`.
    Auto { tol: f64 },
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Auto {
            tol: DEFAULT_TAIL_TOL,
        }
    }
}

impl Serialize for Horizon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Horizon::Fixed(t) => s.serialize_u64(t as u64),
            Horizon::Auto { tol } if tol == DEFAULT_TAIL_TOL => s.serialize_str("auto"),
            Horizon::Auto { tol } => {
                use serde::ser::SerializeMap;
                let mut map = s.serialize_map(Some(1))?;
                map.serialize_entry("auto_tol", &tol)?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Steps(usize),
            Name(String),
            Tol { auto_tol: f64 },
        }
        match Repr::deserialize(d)? {
            Repr::Steps(0) => Err(serde::de::Error::custom("horizon must be at least 1")),
            Repr::Steps(t) => Ok(Horizon::Fixed(t)),
            Repr::Name(s) if s == "auto" => Ok(Horizon::default()),
            Repr::Name(s) => Err(serde::de::Error::custom(format!(
                "unknown horizon `{s}` (expected an integer or \"auto\")"
            ))),
            Repr::Tol { auto_tol } if auto_tol > 0.0 => Ok(Horizon::Auto { tol: auto_tol }),
            Repr::Tol { .. } => Err(serde::de::Error::custom("auto_tol must be positive")),
        }
    }
}

/// Number of steps for which `gamma^T * cap / (1 - gamma) <= tol`.
pub fn tail_horizon(gamma: f64, cap: f64, tol: f64) -> usize {
    if gamma <= 0.0 || cap <= 0.0 {
        return 1;
    }
    let t = ((tol * (1.0 - gamma) / cap).ln() / gamma.ln()).ceil();
    if t.is_nan() || t < 1.0 {
        1
    } else {
        t.min(MAX_AUTO_HORIZON as f64) as usize
    }
}

/// Bound on `|C_inf - C_T|` for a closed loop whose states stay within `state_bound`
/// and whose controller is `lipschitz`-Lipschitz with `pi(0) = 0`.
pub fn tail_bound(
    problem: &LqrProblem,
    gamma: f64,
    horizon: usize,
    state_bound: f64,
    lipschitz: f64,
) -> f64 {
    let q = problem.q().norm();
    let r = problem.r().norm();
    gamma.powi(horizon as i32) * state_bound.powi(2) * (q + r * lipschitz.powi(2)) / (1.0 - gamma)
}

/// Resolves [`Horizon::Auto`] by probing the closed loop from the support of `dist`.
///
/// The per-step cost cap is the largest stage cost seen on probe rollouts; the probe
/// is lengthened to the resulting horizon until the cap stops growing.
pub fn resolve_horizon<C: Controller + ?Sized>(
    problem: &LqrProblem,
    policy: &C,
    dist: &InitialDistribution,
    gamma: f64,
    horizon: Horizon,
) -> Result<usize> {
    let tol = match horizon {
        Horizon::Fixed(0) => {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Horizon::Fixed(t) => return Ok(t),
        Horizon::Auto { tol } => tol,
    };
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "automatic horizon needs gamma in [0, 1), got {gamma}; pass a fixed horizon"
        )));
    }
    if gamma == 0.0 {
        return Ok(1);
    }
    let probes = dist.probe_states();
    let mut probe_len = 32usize;
    let mut cap = 0.0f64;
    for _ in 0..12 {
        for x0 in &probes {
            let traj = problem.rollout(policy, x0, probe_len)?;
            for (x, u) in traj.states.iter().zip(&traj.actions) {
                cap = cap.max(problem.stage_cost(x, u));
            }
        }
        let t = tail_horizon(gamma, cap, tol);
        if t <= probe_len {
            return Ok(t);
        }
        if probe_len >= MAX_AUTO_HORIZON {
            break;
        }
        probe_len = t;
    }
    Ok(tail_horizon(gamma, cap, tol))
}

/// Initial states at which the closed-loop rollout hits a kink of a scalar controller
/// within `depth` steps. Used to split quadrature panels.
pub fn closed_loop_breakpoints<C: Controller + ?Sized>(
    problem: &LqrProblem,
    policy: &C,
    lower: f64,
    upper: f64,
    depth: usize,
) -> Vec<f64> {
    let mut kinks = policy.kinks_1d();
    if problem.state_dim() != 1 || kinks.is_empty() {
        return Vec::new();
    }
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();

    // (initial state, state at the current level); x_t is affine between neighbours.
    let mut nodes: Vec<(f64, f64)> = vec![(lower, lower), (upper, upper)];
    for level in 0..=depth {
        let mut refined = Vec::with_capacity(nodes.len());
        for pair in nodes.windows(2) {
            let (u0, s0) = pair[0];
            let (u1, s1) = pair[1];
            refined.push((u0, s0));
            if s0 == s1 {
                continue;
            }
            let (lo, hi) = if s0 < s1 { (s0, s1) } else { (s1, s0) };
            let mut inside: Vec<f64> = kinks
                .iter()
                .copied()
                .filter(|k| *k > lo && *k < hi)
                .collect();
            if s1 < s0 {
                inside.reverse();
            }
            for k in inside {
                let frac = (k - s0) / (s1 - s0);
                let u = u0 + frac * (u1 - u0);
                if u > u0 && u < u1 {
                    refined.push((u, k));
                }
            }
        }
        refined.push(*nodes.last().expect("at least two nodes"));
        nodes = refined;
        if level == depth || nodes.len() > MAX_PANELS {
            break;
        }
        for node in nodes.iter_mut() {
            let x = DVector::from_element(1, node.1);
            let u = policy.act(&x);
            node.1 = (problem.a() * &x + problem.b() * &u)[0];
            if !node.1.is_finite() || node.1.abs() > STATE_GUARD {
                node.1 = node.1.clamp(-STATE_GUARD, STATE_GUARD);
            }
        }
    }
    nodes[1..nodes.len() - 1].iter().map(|n| n.0).collect()
}

/// Weighted evaluation points of `dist` for this controller and horizon. Uniform
/// components are split at the closed-loop kink preimages.
pub fn evaluation_points<C: Controller + ?Sized>(
    problem: &LqrProblem,
    policy: &C,
    dist: &InitialDistribution,
    horizon: usize,
) -> Vec<(DVector<f64>, f64)> {
    let breakpoints = match dist.uniform_part() {
        Some(u) if u.weight > 0.0 => closed_loop_breakpoints(
            problem,
            policy,
            u.lower,
            u.upper,
            horizon.saturating_sub(1).min(KINK_DEPTH),
        ),
        _ => Vec::new(),
    };
    dist.evaluation_points(&breakpoints)
}

/// Expected truncated discounted cost `E[C_T[x_0]]` over `dist`.
pub fn discounted_cost<C: Controller + ?Sized>(
    problem: &LqrProblem,
    policy: &C,
    dist: &InitialDistribution,
    gamma: f64,
    horizon: Horizon,
) -> Result<f64> {
    check_gamma(gamma)?;
    problem.check_controller(policy)?;
    check_dim(
        "initial distribution",
        problem.state_dim(),
        dist.state_dim(),
    )?;
    let steps = resolve_horizon(problem, policy, dist, gamma, horizon)?;
    let mut total = 0.0;
    for (x0, w) in evaluation_points(problem, policy, dist, steps) {
        total += w * problem.trajectory_cost(policy, &x0, gamma, steps)?;
    }
    if !total.is_finite() || total > COST_GUARD {
        return Err(Error::UnstableCost { gamma, cost: total });
    }
    Ok(total)
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "discount factor {gamma} is outside [0, 1]"
        )))
    }
}

//! Linear-in-parameter policies `pi_theta(x) = sum_k theta_k f_k(x)` over a catalog of
//! globally Lipschitz basis functions, including the tent-function feature map of the
//! local-minimum construction.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problem::Controller;

/// Weight of the `|x|` term of the counterexample feature.
pub const OMEGA_0: f64 = -0.5;
/// Center, half-width and weight of the large spike.
pub const SPIKE_CENTER: f64 = -2.0;
pub const SPIKE_HALF_WIDTH: f64 = 0.1;
pub const SPIKE_WEIGHT: f64 = 3.0;
/// Centers and weight of the two small tents.
pub const SMALL_TENT_CENTERS: [f64; 2] = [1.5, 1.8];
pub const SMALL_TENT_WEIGHT: f64 = 0.2;

/// Smallest admissible eigenvalue of the probe-grid Gram matrix.
pub const INDEPENDENCE_TOL: f64 = 1e-10;

/// Piecewise-linear bump of height 1 supported on `[center - delta, center + delta]`.
pub fn tent(center: f64, delta: f64, x: f64) -> f64 {
    let d = (x - center).abs();
    if d >= delta {
        0.0
    } else {
        (delta - d) / delta
    }
}

/// Right-hand derivative of [`tent`].
fn tent_slope(center: f64, delta: f64, x: f64) -> f64 {
    if x >= center - delta && x < center {
        1.0 / delta
    } else if x >= center && x < center + delta {
        -1.0 / delta
    } else {
        0.0
    }
}

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// One feature `f_k`. Scalar-valued kinds require a single action dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum BasisFunction {
    /// The matrix unit `1_{row,col}`: `u_row = x_col`, other outputs zero.
    LinearEntry { row: usize, col: usize },
    /// `|x|` on scalar states.
    Abs,
    /// Tent of half-width `delta` centered at `center`, scalar states.
    Tent { center: f64, delta: f64 },
    /// `relu(sign * w'x)`.
    Relu { w: Vec<f64>, sign: f64 },
    /// Fixed linear combination of other features.
    Composite { terms: Vec<WeightedBasis> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedBasis {
    pub weight: f64,
    pub basis: BasisFunction,
}

impl BasisFunction {
    /// Declared global Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match self {
            BasisFunction::LinearEntry { .. } | BasisFunction::Abs => 1.0,
            BasisFunction::Tent { delta, .. } => 1.0 / delta,
            BasisFunction::Relu { w, sign } => {
                sign.abs() * w.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            BasisFunction::Composite { terms } => terms
                .iter()
                .map(|t| t.weight.abs() * t.basis.lipschitz())
                .sum(),
        }
    }

    fn validate(&self, n: usize, m: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPolicy(msg));
        match self {
            BasisFunction::LinearEntry { row, col } => {
                if *row >= m || *col >= n {
                    return bad(format!("linear entry ({row}, {col}) outside {m}x{n}"));
                }
            }
            BasisFunction::Abs => {
                if n != 1 || m != 1 {
                    return bad("abs is only defined for scalar states and actions".into());
                }
            }
            BasisFunction::Tent { center, delta } => {
                if n != 1 || m != 1 {
                    return bad("tent is only defined for scalar states and actions".into());
                }
                if !(*delta > 0.0) || !center.is_finite() || !delta.is_finite() {
                    return bad(format!(
                        "tent needs a finite center and delta > 0, got {delta}"
                    ));
                }
            }
            BasisFunction::Relu { w, sign } => {
                if m != 1 {
                    return bad("relu features need a scalar action".into());
                }
                if w.len() != n {
                    return bad(format!("relu weight has length {}, state has {n}", w.len()));
                }
                if *sign != 1.0 && *sign != -1.0 {
                    return bad(format!("relu sign must be +1 or -1, got {sign}"));
                }
            }
            BasisFunction::Composite { terms } => {
                if terms.is_empty() {
                    return bad("composite feature has no terms".into());
                }
                for t in terms {
                    if !t.weight.is_finite() {
                        return bad("composite weights must be finite".into());
                    }
                    t.basis.validate(n, m)?;
                }
            }
        }
        Ok(())
    }

    /// Adds `scale * f(x)` to `out`.
    fn accumulate(&self, x: &DVector<f64>, scale: f64, out: &mut DVector<f64>) {
        match self {
            BasisFunction::LinearEntry { row, col } => out[*row] += scale * x[*col],
            BasisFunction::Abs => out[0] += scale * x[0].abs(),
            BasisFunction::Tent { center, delta } => out[0] += scale * tent(*center, *delta, x[0]),
            BasisFunction::Relu { w, sign } => {
                let z: f64 = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                out[0] += scale * relu(sign * z);
            }
            BasisFunction::Composite { terms } => {
                for t in terms {
                    t.basis.accumulate(x, scale * t.weight, out);
                }
            }
        }
    }

    /// Adds `scale * df/dx (x)` to the `m x n` matrix `out`, using right-hand
    /// derivatives at kinks.
    fn accumulate_jacobian(&self, x: &DVector<f64>, scale: f64, out: &mut DMatrix<f64>) {
        match self {
            BasisFunction::LinearEntry { row, col } => out[(*row, *col)] += scale,
            BasisFunction::Abs => out[(0, 0)] += scale * if x[0] >= 0.0 { 1.0 } else { -1.0 },
            BasisFunction::Tent { center, delta } => {
                out[(0, 0)] += scale * tent_slope(*center, *delta, x[0])
            }
            BasisFunction::Relu { w, sign } => {
                let z: f64 = sign * w.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
                // For scalar states the active side is the one reached by increasing x.
                let active = if w.len() == 1 && z == 0.0 {
                    sign * w[0] > 0.0
                } else {
                    z >= 0.0
                };
                if active {
                    for (j, wj) in w.iter().enumerate() {
                        out[(0, j)] += scale * sign * wj;
                    }
                }
            }
            BasisFunction::Composite { terms } => {
                for t in terms {
                    t.basis.accumulate_jacobian(x, scale * t.weight, out);
                }
            }
        }
    }

    /// `f(x)` as an `m`-vector.
    pub fn value(&self, x: &DVector<f64>, m: usize) -> DVector<f64> {
        let mut out = DVector::zeros(m);
        self.accumulate(x, 1.0, &mut out);
        out
    }

    /// Non-differentiable points for scalar states.
    pub fn kinks_1d(&self) -> Vec<f64> {
        match self {
            BasisFunction::LinearEntry { .. } => Vec::new(),
            BasisFunction::Abs => vec![0.0],
            BasisFunction::Tent { center, delta } => vec![center - delta, *center, center + delta],
            BasisFunction::Relu { w, .. } => {
                if w.len() == 1 && w[0] != 0.0 {
                    vec![0.0]
                } else {
                    Vec::new()
                }
            }
            BasisFunction::Composite { terms } => terms
                .iter()
                .filter(|t| t.weight != 0.0)
                .flat_map(|t| t.basis.kinks_1d())
                .collect(),
        }
    }

    /// Distance from `x` to the nearest kink set of this feature, if it has one.
    pub fn kink_distance(&self, x: &DVector<f64>) -> Option<f64> {
        match self {
            BasisFunction::LinearEntry { .. } => None,
            BasisFunction::Abs => Some(x[0].abs()),
            BasisFunction::Tent { center, delta } => {
                let d = (x[0] - center).abs();
                Some(d.min((d - delta).abs()))
            }
            BasisFunction::Relu { w, .. } => {
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                (norm > 0.0).then(|| {
                    w.iter()
                        .zip(x.iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        .abs()
                        / norm
                })
            }
            BasisFunction::Composite { terms } => terms
                .iter()
                .filter(|t| t.weight != 0.0)
                .filter_map(|t| t.basis.kink_distance(x))
                .reduce(f64::min),
        }
    }
}

/// Ordered features `f_1..f_d` mapping `n`-vectors to `m`-vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassDoc", into = "ClassDoc")]
pub struct PolicyClass {
    state_dim: usize,
    action_dim: usize,
    bases: Vec<BasisFunction>,
}

#[derive(Serialize, Deserialize)]
struct ClassDoc {
    state_dim: usize,
    action_dim: usize,
    bases: Vec<BasisFunction>,
}

impl TryFrom<ClassDoc> for PolicyClass {
    type Error = Error;

    fn try_from(doc: ClassDoc) -> Result<Self> {
        PolicyClass::new(doc.state_dim, doc.action_dim, doc.bases)
    }
}

impl From<PolicyClass> for ClassDoc {
    fn from(c: PolicyClass) -> Self {
        ClassDoc {
            state_dim: c.state_dim,
            action_dim: c.action_dim,
            bases: c.bases,
        }
    }
}

impl PolicyClass {
    /// Validates each feature and checks linear independence on the probe grid.
    pub fn new(state_dim: usize, action_dim: usize, bases: Vec<BasisFunction>) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::InvalidPolicy("dimensions must be positive".into()));
        }
        if bases.is_empty() {
            return Err(Error::InvalidPolicy(
                "a policy class needs at least one feature".into(),
            ));
        }
        for b in &bases {
            b.validate(state_dim, action_dim)?;
        }
        let class = Self {
            state_dim,
            action_dim,
            bases,
        };
        let lambda = class.independence_witness();
        if !(lambda > INDEPENDENCE_TOL) {
            return Err(Error::InvalidPolicy(format!(
                "features are not linearly independent on the probe grid (min Gram eigenvalue {lambda:e})"
            )));
        }
        Ok(class)
    }

    /// The `n*m` matrix units, so that `theta` is the row-major flattening of a gain `K`.
    pub fn linear(state_dim: usize, action_dim: usize) -> Result<Self> {
        let bases = (0..action_dim)
            .flat_map(|row| (0..state_dim).map(move |col| BasisFunction::LinearEntry { row, col }))
            .collect();
        Self::new(state_dim, action_dim, bases)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Number of parameters `d`.
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn bases(&self) -> &[BasisFunction] {
        &self.bases
    }

    /// `[f_1(x), ..., f_d(x)]`.
    pub fn features(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        self.bases
            .iter()
            .map(|b| b.value(x, self.action_dim))
            .collect()
    }

    /// The `m x d` matrix whose columns are the features at `x`.
    pub fn feature_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.action_dim, self.bases.len());
        let mut col = DVector::zeros(self.action_dim);
        for (k, b) in self.bases.iter().enumerate() {
            col.fill(0.0);
            b.accumulate(x, 1.0, &mut col);
            out.set_column(k, &col);
        }
        out
    }

    /// `sum_k theta_k f_k(x)`.
    pub fn evaluate(&self, theta: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.action_dim);
        for (b, t) in self.bases.iter().zip(theta.iter()) {
            if *t != 0.0 {
                b.accumulate(x, *t, &mut out);
            }
        }
        out
    }

    /// `sum_k theta_k df_k/dx (x)`, an `m x n` matrix.
    pub fn jacobian(&self, theta: &DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.action_dim, self.state_dim);
        for (b, t) in self.bases.iter().zip(theta.iter()) {
            if *t != 0.0 {
                b.accumulate_jacobian(x, *t, &mut out);
            }
        }
        out
    }

    /// Kinks of the features that carry a nonzero weight in `theta`.
    pub fn kinks_1d(&self, theta: &DVector<f64>) -> Vec<f64> {
        self.bases
            .iter()
            .zip(theta.iter())
            .filter(|(_, t)| **t != 0.0)
            .flat_map(|(b, _)| b.kinks_1d())
            .collect()
    }

    /// Distance from `x` to the nearest kink of any feature.
    pub fn kink_distance(&self, x: &DVector<f64>) -> Option<f64> {
        self.bases
            .iter()
            .filter_map(|b| b.kink_distance(x))
            .reduce(f64::min)
    }

    /// Fixed probe grid of `10 d` points built from Chebyshev nodes on `[-5, 5]`.
    pub fn probe_grid(&self) -> Vec<DVector<f64>> {
        let count = 10 * self.bases.len();
        let nodes: Vec<f64> = (0..count)
            .map(|j| 5.0 * ((2 * j + 1) as f64 * std::f64::consts::PI / (2 * count) as f64).cos())
            .collect();
        (0..count)
            .map(|j| {
                DVector::from_fn(self.state_dim, |i, _| {
                    nodes[(j * (2 * i + 1) + 3 * i) % count]
                })
            })
            .collect()
    }

    /// Gram matrix `(1/N) sum_j Phi(x_j)' Phi(x_j)` over the probe grid.
    pub fn probe_gram(&self) -> DMatrix<f64> {
        let grid = self.probe_grid();
        let d = self.bases.len();
        let mut gram = DMatrix::zeros(d, d);
        for x in &grid {
            let phi = self.feature_matrix(x);
            gram += phi.transpose() * &phi;
        }
        gram / grid.len() as f64
    }

    /// Smallest eigenvalue of [`Self::probe_gram`].
    pub fn independence_witness(&self) -> f64 {
        self.probe_gram().symmetric_eigenvalues().min()
    }

    /// Global Lipschitz bound `sum_k |theta_k| Lip(f_k)`.
    pub fn lipschitz_bound(&self, theta: &DVector<f64>) -> f64 {
        self.bases
            .iter()
            .zip(theta.iter())
            .map(|(b, t)| t.abs() * b.lipschitz())
            .sum()
    }
}

/// A policy class together with its parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub class: PolicyClass,
    #[serde(with = "vector_serde")]
    pub theta: DVector<f64>,
}

impl Policy {
    pub fn new(class: PolicyClass, theta: DVector<f64>) -> Result<Self> {
        check_dim("theta", class.len(), theta.len())?;
        Ok(Self { class, theta })
    }

    /// The linear policy `u = K x` in the matrix-unit class.
    pub fn linear_gain(gain: &DMatrix<f64>) -> Result<Self> {
        let class = PolicyClass::linear(gain.ncols(), gain.nrows())?;
        let theta = DVector::from_iterator(gain.len(), gain.transpose().iter().copied());
        Self::new(class, theta)
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.class.evaluate(&self.theta, x)
    }

    pub fn features(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        self.class.features(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.class.jacobian(&self.theta, x)
    }
}

impl Controller for Policy {
    fn state_dim(&self) -> usize {
        self.class.state_dim
    }

    fn input_dim(&self) -> usize {
        self.class.action_dim
    }

    fn act(&self, x: &DVector<f64>) -> DVector<f64> {
        self.eval(x)
    }

    fn kinks_1d(&self) -> Vec<f64> {
        if self.class.state_dim == 1 {
            self.class.kinks_1d(&self.theta)
        } else {
            Vec::new()
        }
    }
}

pub(crate) mod vector_serde {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// The scalar feature `F(x) = w0|x| + 3 T(-2, 0.1) + 0.2 T(1.5, delta) + 0.2 T(1.8, delta)`.
pub fn counterexample_feature(delta: f64) -> BasisFunction {
    let mut terms = vec![
        WeightedBasis {
            weight: OMEGA_0,
            basis: BasisFunction::Abs,
        },
        WeightedBasis {
            weight: SPIKE_WEIGHT,
            basis: BasisFunction::Tent {
                center: SPIKE_CENTER,
                delta: SPIKE_HALF_WIDTH,
            },
        },
    ];
    terms.extend(SMALL_TENT_CENTERS.iter().map(|&center| WeightedBasis {
        weight: SMALL_TENT_WEIGHT,
        basis: BasisFunction::Tent { center, delta },
    }));
    BasisFunction::Composite { terms }
}

/// `F(x)` evaluated directly.
pub fn counterexample_f(delta: f64, x: f64) -> f64 {
    OMEGA_0 * x.abs()
        + SPIKE_WEIGHT * tent(SPIKE_CENTER, SPIKE_HALF_WIDTH, x)
        + SMALL_TENT_CENTERS
            .iter()
            .map(|c| SMALL_TENT_WEIGHT * tent(*c, delta, x))
            .sum::<f64>()
}

/// The two-parameter class `{x, F(x)}`; `theta = (0, 1)` is the trapped policy.
pub fn make_counterexample_class(delta: f64) -> Result<PolicyClass> {
    if !(delta > 0.0 && delta <= SPIKE_HALF_WIDTH) {
        return Err(Error::InvalidArgument(format!(
            "tent half-width must lie in (0, {SPIKE_HALF_WIDTH}], got {delta}"
        )));
    }
    PolicyClass::new(
        1,
        1,
        vec![
            BasisFunction::LinearEntry { row: 0, col: 0 },
            counterexample_feature(delta),
        ],
    )
}

/// Solves `F(x) = target` on the descending branch `[-2, -1.9]` of the large spike,
/// where `F(x) = -29.5 x - 57`.
pub fn preimage_on_descending_spike(target: f64) -> Result<f64> {
    let top = counterexample_f(SPIKE_HALF_WIDTH, SPIKE_CENTER);
    let bottom = counterexample_f(SPIKE_HALF_WIDTH, SPIKE_CENTER + SPIKE_HALF_WIDTH);
    if !(target > bottom && target <= top) {
        return Err(Error::InvalidArgument(format!(
            "target {target} is outside the spike range ({bottom}, {top}]"
        )));
    }
    // on this branch F(x) = bottom - slope * (x - edge)
    let slope = SPIKE_WEIGHT / SPIKE_HALF_WIDTH + OMEGA_0;
    let edge = SPIKE_CENTER + SPIKE_HALF_WIDTH;
    Ok(edge - (target - bottom) / slope)
}

/// `2n` ReLU features `relu(w_k'x), relu(-w_k'x)` with `w_k ~ N(0, I_n)` from a seeded stream.
pub fn make_random_features_class(n: usize, seed: u64) -> Result<PolicyClass> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "state dimension must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bases = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let w: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        bases.push(BasisFunction::Relu {
            w: w.clone(),
            sign: 1.0,
        });
        bases.push(BasisFunction::Relu { w, sign: -1.0 });
    }
    PolicyClass::new(n, 1, bases)
}

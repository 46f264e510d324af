use lqr_homotopy::counterexample::{reference_setup, EPISODE_STEPS};
use lqr_homotopy::optim::hessian_series;
use lqr_homotopy::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

#[test]
fn quadrature_doubling_changes_cost_below_1e_8() {
    let (problem, class, dist) = reference_setup(0.3).unwrap();
    let finer = dist
        .with_nodes(2 * dist.uniform_part().unwrap().nodes)
        .unwrap();
    for theta in [[0.0, 1.0], [-0.3, 0.2], [0.15, -0.4]] {
        let policy = Policy::new(class.clone(), v(&theta)).unwrap();
        let horizon = Horizon::Fixed(EPISODE_STEPS);
        let coarse = discounted_cost(&problem, &policy, &dist, 0.5, horizon).unwrap();
        let fine = discounted_cost(&problem, &policy, &finer, 0.5, horizon).unwrap();
        assert!(
            (coarse - fine).abs() < 1e-8,
            "{theta:?}: {coarse} vs {fine}"
        );
    }
}

#[test]
fn warm_started_sweep_matches_cold_solves() {
    let problem = LqrProblem::new(
        DMatrix::from_row_slice(2, 2, &[1.1, 0.3, 0.0, 0.8]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1) * 0.5,
    )
    .unwrap();
    let grid = [0.0, 0.3, 0.6, 0.9, 1.0];
    for sol in gamma_sweep(&problem, &grid).unwrap() {
        let cold = solve_dare(&problem, sol.gamma).unwrap();
        assert!((&sol.p - &cold.p).amax() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// A step below 1 / lambda_max of the (exactly quadratic) myopic cost never increases it.
    #[test]
    fn myopic_descent_is_monotone(t0 in -4.0f64..4.0, t1 in -4.0f64..4.0) {
        let (problem, class, dist) = reference_setup(0.3).unwrap();
        let myopic = solve_dare(&problem, 0.0).unwrap();
        let hess = hessian_series(&problem, &class, &myopic, &dist, 1).unwrap();
        let cfg = PgConfig {
            step_size: 0.9 / hess.symmetric_eigen().eigenvalues.max(),
            grad_tol: 1e-9,
            max_iters: 200,
            ..PgConfig::default()
        };
        let (_, log) = pg_inner(&problem, &class, &v(&[t0, t1]), &dist, 0.0, &cfg).unwrap();
        for w in log.records.windows(2) {
            prop_assert!(w[1].cost <= w[0].cost + 1e-12);
        }
    }

    #[test]
    fn optimal_cost_is_nondecreasing_in_gamma(a in -1.5f64..1.5, r in 0.05f64..2.0, g in 0.0f64..0.95) {
        let problem = LqrProblem::scalar(a, 1.0, 1.0, r).unwrap();
        let lo = solve_dare(&problem, g).unwrap();
        let hi = solve_dare(&problem, g + 0.05).unwrap();
        prop_assert!(hi.p[(0, 0)] >= lo.p[(0, 0)] - 1e-12);
        prop_assert!(lo.p[(0, 0)] >= 1.0 - 1e-12);
    }

    #[test]
    fn reverse_gradient_matches_differences_on_linear_class(k in -0.9f64..0.9, x in -3.0f64..3.0, g in 0.0f64..0.95) {
        let problem = LqrProblem::scalar(0.5, 1.0, 1.0, 0.3).unwrap();
        let class = PolicyClass::linear(1, 1).unwrap();
        let dist = InitialDistribution::dirac(v(&[x])).unwrap();
        let policy = Policy::new(class, v(&[k])).unwrap();
        let rep = cost_gradient(&problem, &policy, &dist, g, Horizon::Fixed(40)).unwrap();
        let fd = fd_gradient(&problem, &policy, &dist, g, Horizon::Fixed(40), 1e-6).unwrap();
        prop_assert!((rep.grad[0] - fd[0]).abs() <= 1e-6 * (1.0 + rep.grad[0].abs()));
    }
}

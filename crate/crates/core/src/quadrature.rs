//! Composite Gauss–Legendre rules on an interval split at caller-supplied breakpoints.
//!
//! The uniform component of an initial distribution is integrated with a fixed node
//! budget. When the integrand is only piecewise smooth (closed-loop rollouts of
//! piecewise-linear policies), splitting the interval at the kinks restores the
//! spectral accuracy of Gauss–Legendre on every panel.

use std::cell::RefCell;
use std::collections::HashMap;

use gauss_quad::legendre::GaussLegendre;

/// Minimum number of nodes placed on any panel. Two nodes integrate cubics exactly,
/// which covers the piecewise-quadratic stage costs of piecewise-linear closed loops.
pub const MIN_NODES_PER_PANEL: usize = 2;

thread_local! {
    static RULES: RefCell<HashMap<usize, Vec<(f64, f64)>>> = RefCell::new(HashMap::new());
}

fn with_rule<T>(degree: usize, f: impl FnOnce(&[(f64, f64)]) -> T) -> T {
    RULES.with(|cell| {
        let mut cache = cell.borrow_mut();
        let rule = cache.entry(degree).or_insert_with(|| {
            GaussLegendre::new(degree)
                .expect("degree >= 2")
                .into_node_weight_pairs()
        });
        f(rule)
    })
}

/// Nodes and weights of a composite Gauss–Legendre rule on `[lower, upper]`.
///
/// The total budget `nodes` is distributed over the panels in proportion to their
/// length, with at least [`MIN_NODES_PER_PANEL`] per panel. Breakpoints outside the
/// open interval are ignored. Weights sum to `upper - lower`.
pub fn composite_gauss_legendre(
    lower: f64,
    upper: f64,
    breakpoints: &[f64],
    nodes: usize,
) -> Vec<(f64, f64)> {
    let width = upper - lower;
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|b| b.is_finite() && *b > lower && *b < upper)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * width.max(1.0));

    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(lower);
    edges.extend(cuts);
    edges.push(upper);

    let mut out = Vec::new();
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let share = (nodes as f64 * len / width).ceil() as usize;
        let degree = share.max(MIN_NODES_PER_PANEL);
        let half = 0.5 * len;
        let mid = 0.5 * (a + b);
        with_rule(degree, |rule| {
            out.extend(rule.iter().map(|&(x, w)| (mid + half * x, half * w)));
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(rule: &[(f64, f64)], f: impl Fn(f64) -> f64) -> f64 {
        rule.iter().map(|&(x, w)| w * f(x)).sum()
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let rule = composite_gauss_legendre(-5.0, 5.0, &[-2.0, 0.0, 1.5], 64);
        let total: f64 = rule.iter().map(|p| p.1).sum();
        assert!((total - 10.0).abs() < 1e-12);
    }

    #[test]
    fn exact_for_polynomials() {
        let rule = composite_gauss_legendre(-1.0, 2.0, &[], 4);
        let got = integrate(&rule, |x| x.powi(7) - 3.0 * x.powi(2));
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((got - exact).abs() < 1e-12);
    }

    #[test]
    fn breakpoint_at_kink_makes_abs_exact() {
        let plain = composite_gauss_legendre(-1.0, 3.0, &[], 16);
        let split = composite_gauss_legendre(-1.0, 3.0, &[0.0], 16);
        let exact = 0.5 + 4.5;
        assert!((integrate(&plain, f64::abs) - exact).abs() > 1e-6);
        assert!((integrate(&split, f64::abs) - exact).abs() < 1e-13);
    }

    #[test]
    fn ignores_out_of_range_breakpoints() {
        let a = composite_gauss_legendre(0.0, 1.0, &[-3.0, 7.0, f64::NAN], 8);
        let b = composite_gauss_legendre(0.0, 1.0, &[], 8);
        assert_eq!(a, b);
    }
}

//! Scalar terms of the evolution equation of `*Ω`.

use super::{ManifoldSpec, SecondFundamentalForm, SingularValueData};
use crate::error::{Error, Result};

/// Smallness radius for `|Λ|²` under which `Q(x) > |x|²/2` is expected.
pub const DEFAULT_Q_EPSILON: f64 = 0.05;

/// `1/√∏(1+λ_i²)`, the Jacobian of the projection of the graph onto the base.
pub fn star_omega(lambdas: &[f64]) -> f64 {
    let prod: f64 = lambdas.iter().map(|l| 1.0 + l * l).product();
    1.0 / prod.sqrt()
}

/// Value of `det(g + f*h)` and its margin below 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphCondition {
    pub det_value: f64,
    /// `2 − det_value`; nonpositive when the hypothesis fails.
    pub delta: f64,
}

impl GraphCondition {
    pub fn holds(&self) -> bool {
        self.delta > 0.0
    }

    /// `Σλ_i² ≤ 1 − δ` whenever `δ > 0`. Equality holds for `n = 1`, so the
    /// comparison allows a few ulps of the determinant.
    pub fn energy_bound_holds(&self, lambdas: &[f64]) -> bool {
        let energy: f64 = lambdas.iter().map(|l| l * l).sum();
        !self.holds() || energy <= 1.0 - self.delta + 8.0 * f64::EPSILON * self.det_value
    }
}

pub fn graph_condition(lambdas: &[f64]) -> GraphCondition {
    let det_value: f64 = lambdas.iter().map(|l| 1.0 + l * l).product();
    GraphCondition { det_value, delta: 2.0 - det_value }
}

/// `Σ_i λ_i²/(1+λ_i²) [k₁ Σ_{j≠i} 1/(1+λ_j²) + k₂ (1 − n + Σ_{j≠i} 1/(1+λ_j²))]`.
///
/// `lambdas` may be shorter than `spec.n`; missing entries are zero.
pub fn curvature_term(lambdas: &[f64], spec: &ManifoldSpec) -> f64 {
    let n = spec.n;
    debug_assert!(lambdas.len() <= n);
    let inv = |j: usize| {
        let l = lambdas.get(j).copied().unwrap_or(0.0);
        1.0 / (1.0 + l * l)
    };
    let mut total = 0.0;
    for (i, &li) in lambdas.iter().enumerate() {
        let others: f64 = (0..n).filter(|&j| j != i).map(inv).sum();
        let bracket = spec.k1 * others + spec.k2 * (1.0 - n as f64 + others);
        total += li * li / (1.0 + li * li) * bracket;
    }
    total
}

/// The equal-curvature form `c Σ_i λ_i²/(1+λ_i²) [Σ_{j≠i} 2/(1+λ_j²) + 1 − n]`.
pub fn curvature_term_same(lambdas: &[f64], n: usize, c: f64) -> f64 {
    let inv = |j: usize| {
        let l = lambdas.get(j).copied().unwrap_or(0.0);
        1.0 / (1.0 + l * l)
    };
    let mut total = 0.0;
    for (i, &li) in lambdas.iter().enumerate() {
        let others: f64 = (0..n).filter(|&j| j != i).map(|j| 2.0 * inv(j)).sum();
        total += li * li / (1.0 + li * li) * (others + 1.0 - n as f64);
    }
    c * total
}

/// Quadratic second-fundamental-form term of the `*Ω` equation, with `h` in
/// the frames adapted to `svd` (normal index `α` paired with `λ_α`).
pub fn quadratic_term(svd: &SingularValueData, sff: &SecondFundamentalForm) -> Result<f64> {
    let (n, m) = (svd.n(), svd.m());
    if sff.n() != n || sff.m() != m {
        return Err(Error::Dimension(format!(
            "svd is {n}x{m} but second fundamental form is {}x{}",
            sff.n(),
            sff.m()
        )));
    }
    // h_{n+i, jk} with the zero convention for i ≥ m.
    let h = |i: usize, j: usize, k: usize| if i < m { sff.h(i, j, k) } else { 0.0 };
    let mut total = sff.norm_sq();
    for k in 0..n {
        for i in 0..n {
            for j in (i + 1)..n {
                let ll = svd.lambda(i) * svd.lambda(j);
                if ll == 0.0 {
                    continue;
                }
                total -= 2.0 * ll * h(i, i, k) * h(j, j, k);
                total += 2.0 * ll * h(j, i, k) * h(i, j, k);
            }
        }
    }
    Ok(total)
}

/// `Q(x) = Σ x_{iα}² − 2 Σ_{α,β,i<j} (λ_{iα}λ_{jβ} − λ_{jα}λ_{iβ}) x_{iα} x_{jβ}`
/// for row-major `n x m` arrays `lambda` and `x`.
pub fn quadratic_form_q(n: usize, m: usize, lambda: &[f64], x: &[f64]) -> f64 {
    assert_eq!(lambda.len(), n * m, "lambda must be n x m");
    assert_eq!(x.len(), n * m, "x must be n x m");
    let at = |a: &[f64], i: usize, alpha: usize| a[i * m + alpha];
    let mut q: f64 = x.iter().map(|v| v * v).sum();
    for i in 0..n {
        for j in (i + 1)..n {
            for alpha in 0..m {
                for beta in 0..m {
                    let c = at(lambda, i, alpha) * at(lambda, j, beta)
                        - at(lambda, j, alpha) * at(lambda, i, beta);
                    q -= 2.0 * c * at(x, i, alpha) * at(x, j, beta);
                }
            }
        }
    }
    q
}

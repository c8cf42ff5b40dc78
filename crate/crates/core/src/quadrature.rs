//! Gauss rules and adaptive integration used by the oracle and the diagnostics.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Affine map of a rule on `[-1, 1]` to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let (h, c) = (0.5 * (b - a), 0.5 * (b + a));
        Rule {
            nodes: self.nodes.iter().map(|x| c + h * x).collect(),
            weights: self.weights.iter().map(|w| h * w).collect(),
        }
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Rule for `E[g(ξ)]`, `ξ ~ N(0,1)`: Gauss-Legendre panels on `[-range, range]`
/// at most one unit wide, with an extra edge at every breakpoint inside and
/// the density folded into the weights. Unlike Gauss-Hermite it stays spectrally accurate for integrands
/// that are only piecewise smooth with known kinks.
pub fn normal_panels(points: usize, breakpoints: &[f64], range: f64) -> Rule {
    let mut edges: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|b| b.is_finite() && b.abs() < range)
        .collect();
    let whole = range.floor() as i64;
    edges.extend((-whole..=whole).map(|k| k as f64).filter(|k| k.abs() < range));
    edges.push(-range);
    edges.push(range);
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * range);
    let base = gauss_legendre(points);
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut rule = Rule {
        nodes: Vec::with_capacity(points * (edges.len() - 1)),
        weights: Vec::with_capacity(points * (edges.len() - 1)),
    };
    for pair in edges.windows(2) {
        let panel = base.mapped(pair[0], pair[1]);
        for (&x, &w) in panel.nodes.iter().zip(&panel.weights) {
            rule.nodes.push(x);
            rule.weights.push(w * norm * (-0.5 * x * x).exp());
        }
    }
    rule
}

/// Gauss-Legendre rule on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// Golub-Welsch for a symmetric tridiagonal Jacobi matrix.
fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> Rule {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Hermite rule for `E[f(ξ)]`, `ξ ~ N(0, 1)` (probabilists' weight,
/// weights summing to one).
pub fn gauss_hermite_normal(n: usize) -> Rule {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    let mut rule = golub_welsch(&diag, &off, 1.0);
    // symmetrise against eigen-solver rounding
    for i in 0..n / 2 {
        let x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
        let w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
    let total: f64 = rule.weights.iter().sum();
    rule.weights.iter_mut().for_each(|w| *w /= total);
    rule
}

/// Generalized Gauss-Laguerre rule for `∫_0^∞ u^α e^{-u} f(u) du`.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Rule {
    assert!(n >= 1 && alpha > -1.0);
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n)
        .map(|k| (k as f64 * (k as f64 + alpha)).sqrt())
        .collect();
    golub_welsch(&diag, &off, libm::tgamma(alpha + 1.0))
}

/// Adaptive bisection with a 10-point Gauss-Legendre panel rule.
pub fn integrate_adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    let rule = gauss_legendre(10);
    let panel = |lo: f64, hi: f64| rule.mapped(lo, hi).integrate(f);
    let mut stack = vec![(a, b, panel(a, b), 0usize)];
    let mut total = 0.0;
    let mut evaluations = 0usize;
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, right) = (panel(lo, mid), panel(mid, hi));
        evaluations += 1;
        let refined = left + right;
        if !refined.is_finite() {
            return Err(Error::QuadratureFailure(format!(
                "non-finite integrand on [{lo}, {hi}]"
            )));
        }
        let local_tol = tol * ((hi - lo) / (b - a)).max(1e-3);
        if (refined - whole).abs() <= local_tol || (hi - lo) < 1e-15 * (b - a).abs() {
            total += refined;
        } else if depth >= 60 || evaluations > 200_000 {
            return Err(Error::QuadratureFailure(format!(
                "no convergence on [{lo}, {hi}] after {evaluations} panels"
            )));
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    Ok(total)
}

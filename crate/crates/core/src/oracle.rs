//! Deterministic evaluation of the fixed-point map in dimension one.
//!
//! For `d = 1`, `A = a`, `Σ = σ` the map reads
//!
//! ```text
//! Φ_T(w)(x) = e^{-aT} E[w(X_T)] + ∫_0^T e^{-as} E[Ũ_s f(X_s, w(X_s)σ)] ds
//! ```
//!
//! With `s = -ln(1-τ)/a` and `X_s = m_s + √Σ_s ξ` the time integrand becomes
//! `(1/a) E[ξ f(X_s, w(X_s)σ)] / √Σ_s` on `τ ∈ (0, 1 - e^{-aT})`, bounded as
//! `τ → 0`. Panels are geometric toward `τ = 0`. The Gaussian expectation is
//! taken with Gauss-Legendre panels on `ξ ∈ [-L, L]` split where `X_s` hits
//! the origin or a breakpoint of `w`, because drivers built on `|x|` kink at
//! the origin, interpolated fields kink at grid nodes, and plain Gauss-Hermite
//! only converges like `1/n` across a kink.

use crate::error::{Error, Result};
use crate::fixed_point::VectorField;
use crate::ou_model::OuModel;
use crate::problem::Driver;
use crate::quadrature::{gauss_legendre, normal_panels};

/// Truncation of the standard normal variable; the tail mass beyond is
/// below `1e-22`.
const XI_RANGE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    /// Geometric panels `[2^{-k-1}, 2^{-k}]` toward `τ = 0`.
    pub time_panels: usize,
    /// Gauss-Legendre points per time panel.
    pub time_points: usize,
    /// Gauss-Legendre points per panel in `ξ`.
    pub space_points: usize,
    /// `None` is `T = ∞`.
    pub horizon: Option<f64>,
    /// When set, the value is recomputed with every point count doubled and
    /// `NonConvergence` is returned if the two differ by more than this.
    pub tol: Option<f64>,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            time_panels: 40,
            time_points: 16,
            space_points: 12,
            horizon: None,
            tol: None,
        }
    }
}

impl QuadSpec {
    pub fn doubled(&self) -> Self {
        Self {
            time_panels: self.time_panels * 2,
            time_points: self.time_points * 2,
            space_points: self.space_points * 2,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.time_points < 4 || self.space_points < 4 || self.time_panels < 4 {
            return Err(Error::Config(format!(
                "oracle point counts must be >= 4 (got panels {}, time {}, space {})",
                self.time_panels, self.time_points, self.space_points
            )));
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0) {
                return Err(Error::NonPositiveTime(t));
            }
        }
        Ok(())
    }
}

struct Scalars {
    a: f64,
    sigma: f64,
}

fn scalars(model: &OuModel) -> Result<Scalars> {
    if model.dim() != 1 {
        return Err(Error::DimTooLarge(model.dim()));
    }
    Ok(Scalars {
        a: model.drift()[(0, 0)],
        sigma: model.diffusion()[(0, 0)],
    })
}

/// `E[g(m + sd ξ)]`-style expectation over `ξ ~ N(0,1)` with a panel edge
/// wherever `m + sd ξ` crosses one of `kinks`.
fn gaussian_expectation(points: usize, kinks: &[f64], m: f64, sd: f64, g: impl FnMut(f64) -> f64) -> f64 {
    let edges: Vec<f64> = kinks.iter().map(|k| (k - m) / sd).collect();
    normal_panels(points, &edges, XI_RANGE).integrate(g)
}

fn phi_once(model: &OuModel, driver: &Driver, w: &dyn VectorField, x: f64, spec: &QuadSpec) -> Result<f64> {
    spec.validate()?;
    let Scalars { a, sigma } = scalars(model)?;
    let time_rule = gauss_legendre(spec.time_points);
    let tau_max = match spec.horizon {
        Some(t) => -(-a * t).exp_m1(),
        None => 1.0,
    };

    // the driver may kink at the origin, an interpolated w at its nodes
    let mut kinks = w.breakpoints(0);
    kinks.push(0.0);
    let mut wbuf = [0.0];
    let mut f_at = |y: f64| -> f64 {
        w.eval_into(&[y], &mut wbuf);
        driver.eval(&[y], &[wbuf[0] * sigma])
    };

    // time integrand in τ
    let mut integrand = |tau: f64| -> f64 {
        let m = (1.0 - tau) * x;
        let sd = sigma * (tau * (2.0 - tau) / (2.0 * a)).sqrt();
        let base = f_at(m);
        let e = gaussian_expectation(spec.space_points, &kinks, m, sd, |xi| xi * (f_at(m + sd * xi) - base));
        e / (a * sd)
    };

    let mut total = 0.0;
    let mut hi = tau_max;
    for _ in 0..spec.time_panels {
        let lo = 0.5 * hi;
        total += time_rule.mapped(lo, hi).integrate(&mut integrand);
        hi = lo;
    }
    // last panel [0, hi] touches the bounded endpoint
    total += time_rule.mapped(0.0, hi).integrate(&mut integrand);

    if let Some(t) = spec.horizon {
        let decay = (-a * t).exp();
        let m = decay * x;
        let sd = sigma * (-(-2.0 * a * t).exp_m1() / (2.0 * a)).sqrt();
        let transport = gaussian_expectation(spec.space_points, &kinks, m, sd, |xi| {
            w.eval_into(&[m + sd * xi], &mut wbuf);
            wbuf[0]
        });
        total += decay * transport;
    }
    Ok(total)
}

/// `Φ_T(w)(x)` by nested quadrature, `d = 1` only.
pub fn phi_infinity(model: &OuModel, driver: &Driver, w: &dyn VectorField, x: f64, spec: &QuadSpec) -> Result<f64> {
    let value = phi_once(model, driver, w, x, spec)?;
    if let Some(tol) = spec.tol {
        let refined = phi_once(model, driver, w, x, &spec.doubled())?;
        let diff = (refined - value).abs();
        if !(diff <= tol) {
            return Err(Error::NonConvergence { diff, tol });
        }
        return Ok(refined);
    }
    Ok(value)
}

/// `max_x |Φ(w)(x) - w(x)|` over the probe points.
pub fn fixed_point_residual(
    model: &OuModel,
    driver: &Driver,
    w: &dyn VectorField,
    probes: &[f64],
    spec: &QuadSpec,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for &x in probes {
        let phi = phi_infinity(model, driver, w, x, spec)?;
        worst = worst.max((phi - w.eval(&[x])[0]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::{node_update, FnField, ZeroField};
    use crate::problem::{Benchmark, ExactGradient};
    use crate::randomized_weight::{RandomizerConfig, ThetaMode};
    use crate::rng::substream;

    fn setup(gamma: f64) -> (OuModel, Driver) {
        let b = Benchmark::new(gamma, 2.0, 1).unwrap();
        let (a, s) = b.model_matrices();
        (OuModel::new(a, s).unwrap(), b.driver())
    }

    fn exact_v() -> ExactGradient {
        Benchmark::exact_field(1)
    }

    #[test]
    fn trivial_drivers() {
        let (model, _) = setup(1.0);
        let spec = QuadSpec::default();
        let v = exact_v();
        assert_eq!(phi_infinity(&model, &Driver::zero(), &v, 0.7, &spec).unwrap(), 0.0);
        for x in [-1.0, 0.0, 0.3] {
            let p = phi_infinity(&model, &Driver::constant(2.5), &v, x, &spec).unwrap();
            assert_eq!(p, 0.0, "constant driver at x={x}");
        }
        let r = fixed_point_residual(&model, &Driver::zero(), &ZeroField(1), &[-1.0, 0.0, 1.0], &spec).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn rejects_higher_dimension() {
        let model = OuModel::isotropic(2, 2.0, 1.0).unwrap();
        let err = phi_infinity(&model, &Driver::zero(), &ZeroField(2), 0.0, &QuadSpec::default()).unwrap_err();
        assert_eq!(err, Error::DimTooLarge(2));
    }

    #[test]
    fn exact_gradient_is_fixed_point() {
        let (model, driver) = setup(1.0);
        let v = exact_v();
        let r = fixed_point_residual(&model, &driver, &v, &[-2.0, -1.0, 0.0, 1.0, 2.0], &QuadSpec::default()).unwrap();
        assert!(r <= 1e-3, "residual {r}");
    }

    #[test]
    fn finite_horizon_also_fixes_exact_gradient() {
        let (model, driver) = setup(1.0);
        let v = exact_v();
        let spec = QuadSpec {
            horizon: Some(0.7),
            ..QuadSpec::default()
        };
        let r = fixed_point_residual(&model, &driver, &v, &[-1.0, 0.5, 1.5], &spec).unwrap();
        assert!(r <= 1e-3, "residual {r}");
    }

    #[test]
    fn refinement_is_stable() {
        let (model, driver) = setup(1.0);
        let spec = QuadSpec::default();
        for w in [&exact_v() as &dyn VectorField, &ZeroField(1)] {
            for k in 0..9 {
                let x = -2.0 + 0.5 * k as f64;
                let p = phi_infinity(&model, &driver, w, x, &spec).unwrap();
                let q = phi_infinity(&model, &driver, w, x, &spec.doubled()).unwrap();
                assert!((p - q).abs() < 1e-4, "x={x}: {p} vs {q}");
            }
        }
        let checked = QuadSpec {
            tol: Some(1e-4),
            ..spec
        };
        assert!(phi_infinity(&model, &driver, &ZeroField(1), 0.4, &checked).is_ok());
        let coarse = QuadSpec {
            time_panels: 4,
            time_points: 4,
            space_points: 4,
            horizon: None,
            tol: Some(1e-12),
        };
        assert!(matches!(
            phi_infinity(&model, &driver, &ZeroField(1), 0.4, &coarse),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn perturbed_gradient_has_larger_residual() {
        let (model, driver) = setup(0.2);
        let spec = QuadSpec::default();
        let probes = [-1.0, 0.0, 1.0];
        let exact = fixed_point_residual(&model, &driver, &exact_v(), &probes, &spec).unwrap();
        let shifted = FnField::new(1, |x: &[f64], out: &mut [f64]| {
            Benchmark::v_into(x, out);
            out[0] += 0.1;
        });
        let pert = fixed_point_residual(&model, &driver, &shifted, &probes, &spec).unwrap();
        assert!(pert > 10.0 * exact, "{pert} vs {exact}");
    }

    #[test]
    fn agrees_with_monte_carlo() {
        let (model, driver) = setup(1.0);
        let randomizer = RandomizerConfig::new(1.8, 2.0, ThetaMode::Strict).unwrap();
        let spec = QuadSpec::default();
        for (k, x) in [-1.0, 0.4, 1.2].into_iter().enumerate() {
            let q = phi_infinity(&model, &driver, &ZeroField(1), x, &spec).unwrap();
            let mut rng = substream(77, 1, k as u32);
            let est = node_update(&model, &randomizer, &driver, &[x], &ZeroField(1), 100_000, None, &mut rng).unwrap();
            let z = (est.mean[0] - q).abs() / est.std_err[0];
            assert!(z < 5.0, "x={x}: mc {} ± {} vs quad {q}", est.mean[0], est.std_err[0]);
        }
    }
}

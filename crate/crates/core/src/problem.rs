//! Drivers with a known ergodic solution.
//!
//! The benchmark problem takes `A = aI_d`, `Σ = I_d` and
//!
//! ```text
//! f(x, z) = 1 + sin(γ(|x| + |z|)) + γ|z| - sin(γ(|x| + 2|x|e^{-|x|²}))
//!           - (2γ|x| + 2|x|² - d + 2a|x|²) e^{-|x|²}
//! ```
//!
//! whose solution is `u(x) = e^{-|x|²}`, `v(x) = -2xᵀ e^{-|x|²}`, `λ = 1`.
//! `|z|` is the Euclidean norm of the row argument `z = v(x)Σ`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fixed_point::FnField;
use crate::grid::norm;

type DriverFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// `v` of the benchmark as an evaluable field.
pub type ExactGradient = FnField<fn(&[f64], &mut [f64])>;

/// The nonlinearity `f(x, z)` with its declared Lipschitz constants.
#[derive(Clone)]
pub struct Driver {
    f: Arc<DriverFn>,
    k_fx: f64,
    k_fz: f64,
    label: String,
}

impl std::fmt::Debug for Driver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Driver")
            .field("label", &self.label)
            .field("k_fx", &self.k_fx)
            .field("k_fz", &self.k_fz)
            .finish()
    }
}

impl Driver {
    pub fn new(
        label: impl Into<String>,
        k_fx: f64,
        k_fz: f64,
        f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            k_fx,
            k_fz,
            label: label.into(),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", 0.0, 0.0, |_, _| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), 0.0, 0.0, move |_, _| c)
    }

    #[inline]
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        (self.f)(x, z)
    }

    pub fn k_fx(&self) -> f64 {
        self.k_fx
    }

    pub fn k_fz(&self) -> f64 {
        self.k_fz
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Spot-checks `|f(x,z) - f(x,z')| <= K_{f,z} ‖z - z'‖` on random pairs in
    /// `[-radius, radius]^d`. Returns the largest observed ratio; fails if it
    /// exceeds the declared constant by more than 5%.
    pub fn check_lipschitz_z<R: Rng + ?Sized>(
        &self,
        dim: usize,
        radius: f64,
        pairs: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let mut worst = 0.0f64;
        let draw = |rng: &mut R| -> Vec<f64> {
            (0..dim).map(|_| rng.random_range(-radius..radius)).collect()
        };
        for _ in 0..pairs {
            let x = draw(rng);
            let z1 = draw(rng);
            let z2 = draw(rng);
            let dz: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a - b).collect();
            let dn = norm(&dz);
            if dn == 0.0 {
                continue;
            }
            worst = worst.max((self.eval(&x, &z1) - self.eval(&x, &z2)).abs() / dn);
        }
        if worst > 1.05 * self.k_fz + 1e-12 {
            return Err(Error::Config(format!(
                "driver '{}' violates its declared K_fz = {}: observed ratio {worst}",
                self.label, self.k_fz
            )));
        }
        Ok(worst)
    }
}

/// Benchmark ergodic problem with explicit solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Benchmark {
    pub gamma: f64,
    pub a: f64,
    pub dim: usize,
}

impl Benchmark {
    pub fn new(gamma: f64, a: f64, dim: usize) -> Result<Self> {
        if !(gamma > 0.0) || !(a > 0.0) || dim == 0 {
            return Err(Error::Config(format!(
                "benchmark needs gamma > 0, a > 0, d >= 1 (got {gamma}, {a}, {dim})"
            )));
        }
        Ok(Self { gamma, a, dim })
    }

    /// `f` with `K_{f,z} = 2γ`.
    pub fn driver(&self) -> Driver {
        let Benchmark { gamma, a, dim } = *self;
        let d = dim as f64;
        // K_fx: γ + 3γ from the two sines plus sup_r |h'(r)| for
        // h(r) = (2γr + (2+2a)r² - d) e^{-r²}, bounded on a fine radial grid.
        let h = |r: f64| (2.0 * gamma * r + (2.0 + 2.0 * a) * r * r - d) * (-r * r).exp();
        let step = 1e-4;
        let h_lip = (0..100_000)
            .map(|k| k as f64 * step)
            .map(|r| ((h(r + step) - h(r)) / step).abs())
            .fold(0.0, f64::max);
        Driver::new(
            format!("benchmark(gamma={gamma}, a={a}, d={dim})"),
            4.0 * gamma + 1.01 * h_lip,
            2.0 * gamma,
            move |x, z| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let r = r2.sqrt();
                let zn = norm(z);
                let e = (-r2).exp();
                1.0 + (gamma * (r + zn)).sin() + gamma * zn
                    - (gamma * (r + 2.0 * r * e)).sin()
                    - (2.0 * gamma * r + 2.0 * r2 - d + 2.0 * a * r2) * e
            },
        )
    }

    pub fn model_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::identity(self.dim, self.dim) * self.a,
            DMatrix::identity(self.dim, self.dim),
        )
    }

    /// `u(x) = e^{-|x|²}`.
    pub fn u(x: &[f64]) -> f64 {
        (-x.iter().map(|v| v * v).sum::<f64>()).exp()
    }

    /// `v(x) = -2xᵀ e^{-|x|²}`.
    pub fn v_into(x: &[f64], out: &mut [f64]) {
        let e = Self::u(x);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -2.0 * xi * e;
        }
    }

    pub fn v(x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        Self::v_into(x, &mut out);
        out
    }

    pub fn exact_field(dim: usize) -> ExactGradient {
        FnField::new(dim, Self::v_into as fn(&[f64], &mut [f64]))
    }

    pub fn lambda(&self) -> f64 {
        1.0
    }
}

/// `ℒu(x) + f(x, ∇u(x)Σ)` for `u = e^{-|x|²}` and the generator
/// `ℒu = -Ax·∇u + ½ Tr(ΣΣᵀ ∇²u)`, evaluated with analytic derivatives.
pub fn benchmark_generator_value(
    driver: &Driver,
    drift: &DMatrix<f64>,
    diffusion: &DMatrix<f64>,
    x: &[f64],
) -> f64 {
    let d = x.len();
    let e = Benchmark::u(x);
    let grad: Vec<f64> = x.iter().map(|xi| -2.0 * xi * e).collect();
    let q = diffusion * diffusion.transpose();
    let mut transport = 0.0;
    for i in 0..d {
        let ax_i: f64 = (0..d).map(|j| drift[(i, j)] * x[j]).sum();
        transport -= ax_i * grad[i];
    }
    let mut trace = 0.0;
    for i in 0..d {
        for j in 0..d {
            let hess = (4.0 * x[i] * x[j] - if i == j { 2.0 } else { 0.0 }) * e;
            trace += q[(j, i)] * hess;
        }
    }
    let z: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|k| grad[k] * diffusion[(k, j)]).sum())
        .collect();
    transport + 0.5 * trace + driver.eval(x, &z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::tagged_stream;

    #[test]
    fn driver_at_origin() {
        let f = Benchmark::new(1.0, 2.0, 1).unwrap().driver();
        assert_eq!(f.eval(&[0.0], &[0.0]), 2.0);
        assert_eq!(Benchmark::v(&[0.0]), vec![-0.0]);
        assert_eq!(f.k_fz(), 2.0);
    }

    #[test]
    fn pde_identity_on_random_points() {
        let mut rng = tagged_stream(3, 9);
        for dim in 1..=3 {
            let b = Benchmark::new(1.3, 2.0, dim).unwrap();
            let (a, s) = b.model_matrices();
            let f = b.driver();
            for _ in 0..300 {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
                let r = benchmark_generator_value(&f, &a, &s, &x) - 1.0;
                assert!(r.abs() <= 1e-12, "d={dim} x={x:?} residual {r}");
            }
        }
    }

    #[test]
    fn lipschitz_spot_check() {
        let mut rng = tagged_stream(1, 2);
        let f = Benchmark::new(1.0, 2.0, 2).unwrap().driver();
        let ratio = f.check_lipschitz_z(2, 3.0, 2000, &mut rng).unwrap();
        assert!(ratio <= 2.0 * 1.05);
        let liar = Driver::new("liar", 0.0, 0.1, |_, z| 5.0 * z[0]);
        assert!(liar.check_lipschitz_z(1, 1.0, 100, &mut rng).is_err());
    }
}

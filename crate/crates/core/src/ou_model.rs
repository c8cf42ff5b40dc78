//! Multidimensional Ornstein-Uhlenbeck model `dX = -A X dt + Σ dW`.
//!
//! Everything the likelihood-ratio representation needs lives here: the
//! propagator `e^{-At}`, the finite-time covariance `Σ_t`, the stationary
//! covariance `Σ_∞` and exact joint sampling of `(X_s, Ũ_s)`.
//!
//! Symmetric drifts are handled in their eigenbasis, where
//! `Σ_t = Q [S̃_ij (1 - e^{-(λ_i+λ_j)t}) / (λ_i+λ_j)] Qᵀ` is evaluated with
//! `expm1` and carries no cancellation at small `t`. General drifts go
//! through the Lyapunov identity `Σ_t = Σ_∞ - e^{-At} Σ_∞ e^{-Aᵀt}` and a
//! second-order expansion below `t_min = 1e-6 / ‖A‖`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Smallest admissible spectral abscissa.
pub const HURWITZ_TOL: f64 = 1e-10;
/// Reciprocal condition number below which `Σ` is declared singular.
pub const SINGULAR_RCOND: f64 = 1e-12;
/// Number of log-spaced points used when `C_A` has to be estimated.
pub const DEFAULT_CA_GRID: usize = 400;

/// Where the value of `C_A` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaSource {
    /// `A` symmetric, so `‖e^{-At}‖ = e^{-at}` and `C_A = 1` exactly.
    Symmetric,
    /// Grid maximisation of `‖e^{-At}‖ e^{at}`; a lower estimate.
    Estimated,
    /// Supplied by the caller.
    User,
}

#[derive(Debug, Clone)]
enum Propagator {
    /// `A = Q diag(rates) Qᵀ`; `cov_basis` is `Qᵀ ΣΣᵀ Q`.
    Symmetric {
        basis: DMatrix<f64>,
        rates: Vec<f64>,
        cov_basis: DMatrix<f64>,
    },
    General,
}

#[derive(Debug, Clone)]
pub struct OuModel {
    dim: usize,
    drift: DMatrix<f64>,
    diffusion: DMatrix<f64>,
    diffusion_cov: DMatrix<f64>,
    abscissa: f64,
    c_a: f64,
    c_a_source: CaSource,
    sigma_inf: DMatrix<f64>,
    small_time: f64,
    propagator: Propagator,
}

/// One joint draw of the state `X_s^x` and the weight `Ũ_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateWeightSample {
    pub x_s: Vec<f64>,
    pub u_tilde: Vec<f64>,
    pub s: f64,
}

/// Reusable buffers for the sampling kernel.
#[derive(Debug, Clone)]
pub struct SampleScratch {
    cov: Vec<f64>,
    prop: Vec<f64>,
    xi: Vec<f64>,
    tmp: Vec<f64>,
    tmp2: Vec<f64>,
}

impl SampleScratch {
    pub fn new(dim: usize) -> Self {
        Self {
            cov: vec![0.0; dim * dim],
            prop: vec![0.0; dim * dim],
            xi: vec![0.0; dim],
            tmp: vec![0.0; dim],
            tmp2: vec![0.0; dim],
        }
    }
}

impl OuModel {
    /// Validates `(A, Σ)` and precomputes the spectral data.
    pub fn new(drift: DMatrix<f64>, diffusion: DMatrix<f64>) -> Result<Self> {
        let d = drift.nrows();
        if d == 0 || drift.ncols() != d || diffusion.nrows() != d || diffusion.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, Sigma is {}x{}",
                drift.nrows(),
                drift.ncols(),
                diffusion.nrows(),
                diffusion.ncols()
            )));
        }
        if drift.iter().chain(diffusion.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite matrix entry".into()));
        }

        let symmetric = is_symmetric(&drift);
        let abscissa = if symmetric {
            SymmetricEigen::new(drift.clone())
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
        } else {
            drift
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::INFINITY, f64::min)
        };
        if !(abscissa > HURWITZ_TOL) {
            return Err(Error::NotHurwitz { abscissa });
        }

        let sv = diffusion.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
        if !(rcond > SINGULAR_RCOND) {
            return Err(Error::SingularDiffusion { rcond });
        }

        let diffusion_cov = &diffusion * diffusion.transpose();
        let sigma_inf = solve_lyapunov(&drift, &diffusion_cov)?;
        let small_time = 1e-6 / spectral_norm(&drift);

        let propagator = if symmetric {
            let eig = SymmetricEigen::new(drift.clone());
            let basis = eig.eigenvectors;
            let cov_basis = basis.transpose() * &diffusion_cov * &basis;
            Propagator::Symmetric {
                rates: eig.eigenvalues.iter().cloned().collect(),
                basis,
                cov_basis,
            }
        } else {
            Propagator::General
        };

        let mut model = Self {
            dim: d,
            drift,
            diffusion,
            diffusion_cov,
            abscissa,
            c_a: 1.0,
            c_a_source: CaSource::Symmetric,
            sigma_inf,
            small_time,
            propagator,
        };
        if !symmetric {
            model.c_a = estimate_ca(&model, DEFAULT_CA_GRID);
            model.c_a_source = CaSource::Estimated;
        }
        Ok(model)
    }

    /// `A = a I_d`, `Σ = σ I_d`.
    pub fn isotropic(dim: usize, a: f64, sigma: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(dim, dim) * a,
            DMatrix::identity(dim, dim) * sigma,
        )
    }

    /// Replaces the `C_A` constant by a caller-supplied (e.g. analytic) value.
    pub fn with_c_a(mut self, c_a: f64) -> Result<Self> {
        if !(c_a >= 1.0) || !c_a.is_finite() {
            return Err(Error::Config(format!("C_A must be >= 1, got {c_a}")));
        }
        self.c_a = c_a;
        self.c_a_source = CaSource::User;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.drift
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.diffusion
    }

    /// `ΣΣᵀ`.
    pub fn diffusion_cov(&self) -> &DMatrix<f64> {
        &self.diffusion_cov
    }

    /// Spectral abscissa `a = min Re spec(A)`.
    pub fn abscissa(&self) -> f64 {
        self.abscissa
    }

    pub fn c_a(&self) -> f64 {
        self.c_a
    }

    pub fn c_a_source(&self) -> CaSource {
        self.c_a_source
    }

    pub fn sigma_inf(&self) -> &DMatrix<f64> {
        &self.sigma_inf
    }

    pub fn small_time_threshold(&self) -> f64 {
        self.small_time
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self.propagator, Propagator::Symmetric { .. })
    }

    /// `e^{-At}` for `t >= 0`. `t = 0` gives the identity exactly.
    pub fn mat_exp_neg(&self, t: f64) -> DMatrix<f64> {
        let d = self.dim;
        if t == 0.0 {
            return DMatrix::identity(d, d);
        }
        if self.abscissa * t > 740.0 {
            return DMatrix::zeros(d, d);
        }
        match &self.propagator {
            Propagator::Symmetric { basis, rates, .. } => {
                let mut scaled = basis.clone();
                for (j, rate) in rates.iter().enumerate() {
                    let f = (-rate * t).exp();
                    scaled.column_mut(j).scale_mut(f);
                }
                scaled * basis.transpose()
            }
            Propagator::General => (&self.drift * (-t)).exp(),
        }
    }

    /// Finite-time covariance `Σ_t` of `X_t^x`.
    pub fn cov_t(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        self.cov_into(t, &mut out);
        Ok(DMatrix::from_row_slice(d, d, &out))
    }

    /// Writes `Σ_t` (row-major) into `out`.
    fn cov_into(&self, t: f64, out: &mut [f64]) {
        let d = self.dim;
        match &self.propagator {
            Propagator::Symmetric {
                basis,
                rates,
                cov_basis,
            } => {
                // M_ij = S̃_ij (1 - e^{-(λi+λj)t}) / (λi+λj), then Q M Qᵀ.
                let mut m = DMatrix::<f64>::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        let r = rates[i] + rates[j];
                        m[(i, j)] = cov_basis[(i, j)] * (-(-r * t).exp_m1()) / r;
                    }
                }
                let full = basis * m * basis.transpose();
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = 0.5 * (full[(i, j)] + full[(j, i)]);
                    }
                }
            }
            Propagator::General => {
                let full = if t < self.small_time {
                    let s = &self.diffusion_cov;
                    let lin = &self.drift * s + s * self.drift.transpose();
                    s * t - lin * (0.5 * t * t)
                } else {
                    let e = self.mat_exp_neg(t);
                    &self.sigma_inf - &e * &self.sigma_inf * e.transpose()
                };
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = 0.5 * (full[(i, j)] + full[(j, i)]);
                    }
                }
            }
        }
    }

    /// `‖Σ_t^{-1}‖₂ = 1 / λ_min(Σ_t)`.
    pub fn cov_t_inverse_norm(&self, t: f64) -> Result<f64> {
        let cov = self.cov_t(t)?;
        let lmin = SymmetricEigen::new(cov)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(lmin > 0.0) {
            return Err(Error::FactorizationFailure { t });
        }
        Ok(1.0 / lmin)
    }

    /// One exact draw of `X_s^x` together with
    /// `Ũ_s = e^{as}(X_s - e^{-As}x)ᵀ Σ_s^{-1} e^{-As}` from the same Gaussian.
    pub fn sample_state_and_weight<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        s: f64,
        rng: &mut R,
    ) -> Result<StateWeightSample> {
        let d = self.dim;
        let mut scratch = SampleScratch::new(d);
        let mut x_s = vec![0.0; d];
        let mut u_tilde = vec![0.0; d];
        self.sample_into(x, s, rng, &mut scratch, &mut x_s, &mut u_tilde)?;
        Ok(StateWeightSample { x_s, u_tilde, s })
    }

    /// Allocation-free version of [`Self::sample_state_and_weight`].
    ///
    /// With `Σ_s = L Lᵀ` and `G = L ξ`, `Gᵀ Σ_s^{-1} = (L^{-T} ξ)ᵀ`, so the weight
    /// only needs one triangular solve.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        s: f64,
        rng: &mut R,
        scratch: &mut SampleScratch,
        x_s: &mut [f64],
        u_tilde: &mut [f64],
    ) -> Result<()> {
        if !(s > 0.0) {
            return Err(Error::NonPositiveTime(s));
        }
        let d = self.dim;
        debug_assert_eq!(x.len(), d);
        for xi in scratch.xi.iter_mut() {
            *xi = rng.sample(StandardNormal);
        }
        let a = self.abscissa;

        match &self.propagator {
            Propagator::Symmetric {
                basis,
                rates,
                cov_basis,
            } => {
                // Work in the eigenbasis: Σ_s = Q M Qᵀ, e^{-As} = Q D Qᵀ.
                let cov = &mut scratch.cov;
                for i in 0..d {
                    for j in 0..=i {
                        let r = rates[i] + rates[j];
                        let v = cov_basis[(i, j)] * (-(-r * s).exp_m1()) / r;
                        cov[i * d + j] = v;
                        cov[j * d + i] = v;
                    }
                }
                if !cholesky_in_place(cov, d) {
                    return Err(Error::FactorizationFailure { t: s });
                }
                // g̃ = L ξ  (eigen coordinates of X_s - e^{-As}x)
                let g = &mut scratch.tmp;
                lower_mul(cov, d, &scratch.xi, g);
                // y = L^{-T} ξ, then ũ̃_i = y_i e^{(a-λ_i)s}
                let y = &mut scratch.tmp2;
                y.copy_from_slice(&scratch.xi);
                solve_upper_transposed(cov, d, y);
                for i in 0..d {
                    y[i] *= ((a - rates[i]) * s).exp();
                }
                // x̃ = Qᵀ x, mean = Q D x̃
                for i in 0..d {
                    let mut xt = 0.0;
                    for k in 0..d {
                        xt += basis[(k, i)] * x[k];
                    }
                    g[i] += (-rates[i] * s).exp() * xt;
                }
                for k in 0..d {
                    let mut xs = 0.0;
                    let mut ut = 0.0;
                    for i in 0..d {
                        xs += basis[(k, i)] * g[i];
                        ut += basis[(k, i)] * y[i];
                    }
                    x_s[k] = xs;
                    u_tilde[k] = ut;
                }
            }
            Propagator::General => {
                self.cov_into(s, &mut scratch.cov);
                if !cholesky_in_place(&mut scratch.cov, d) {
                    return Err(Error::FactorizationFailure { t: s });
                }
                let e = self.mat_exp_neg(s);
                for i in 0..d {
                    scratch.prop[i * d..(i + 1) * d]
                        .iter_mut()
                        .enumerate()
                        .for_each(|(j, p)| *p = e[(i, j)]);
                }
                let g = &mut scratch.tmp;
                lower_mul(&scratch.cov, d, &scratch.xi, g);
                for i in 0..d {
                    let mut m = 0.0;
                    for k in 0..d {
                        m += scratch.prop[i * d + k] * x[k];
                    }
                    x_s[i] = m + g[i];
                }
                let y = &mut scratch.tmp2;
                y.copy_from_slice(&scratch.xi);
                solve_upper_transposed(&scratch.cov, d, y);
                let scale = (a * s).exp();
                for j in 0..d {
                    let mut acc = 0.0;
                    for i in 0..d {
                        acc += y[i] * scratch.prop[i * d + j];
                    }
                    u_tilde[j] = scale * acc;
                }
            }
        }
        Ok(())
    }
}

/// Lower estimate of `C_A = sup_t ‖e^{-At}‖₂ e^{at}`.
///
/// Maximises over `n_grid` log-spaced points of `a t ∈ [1e-3, 60]`, then
/// refines the best bracket by golden-section search. The grid is expressed in
/// units of `1/a`, so `cA` and `A` give the same estimate. Defective drifts whose
/// critical eigenvalue sits exactly at `a` have an unbounded supremum; the
/// returned value is then the maximum over the finite window.
pub fn estimate_ca(model: &OuModel, n_grid: usize) -> f64 {
    let a = model.abscissa;
    let n = n_grid.max(2);
    let (lo, hi) = (1e-3f64.ln(), 60f64.ln());
    let taus: Vec<f64> = (0..n)
        .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp())
        .collect();
    let value = |tau: f64| {
        let t = tau / a;
        let e = model.mat_exp_neg(t);
        spectral_norm(&e) * tau.exp()
    };
    let vals: Vec<f64> = taus.iter().map(|&t| value(t)).collect();
    let (best, &best_val) = vals
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty grid");
    let mut result = best_val;
    if best > 0 && best + 1 < n {
        // golden section on log tau within the bracket
        let (mut l, mut r) = (taus[best - 1].ln(), taus[best + 1].ln());
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = r - g * (r - l);
        let mut dd = l + g * (r - l);
        let (mut fc, mut fd) = (value(c.exp()), value(dd.exp()));
        for _ in 0..60 {
            if fc > fd {
                r = dd;
                dd = c;
                fd = fc;
                c = r - g * (r - l);
                fc = value(c.exp());
            } else {
                l = c;
                c = dd;
                fc = fd;
                dd = l + g * (r - l);
                fd = value(dd.exp());
            }
        }
        result = result.max(fc).max(fd);
    }
    result.max(1.0)
}

/// Solves `A X + X Aᵀ = Q` through the Kronecker-vectorised system.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let k = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DimensionMismatch("singular Lyapunov operator".into()))?;
    let x = DMatrix::from_column_slice(d, d, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.singular_values().max()
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= 1e-14 * scale
}

/// In-place lower Cholesky of a row-major SPD matrix; upper triangle zeroed.
fn cholesky_in_place(m: &mut [f64], d: usize) -> bool {
    for j in 0..d {
        let mut diag = m[j * d + j];
        for k in 0..j {
            diag -= m[j * d + k] * m[j * d + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let l = diag.sqrt();
        m[j * d + j] = l;
        for i in (j + 1)..d {
            let mut v = m[i * d + j];
            for k in 0..j {
                v -= m[i * d + k] * m[j * d + k];
            }
            m[i * d + j] = v / l;
        }
        for k in (j + 1)..d {
            m[j * d + k] = 0.0;
        }
    }
    true
}

fn lower_mul(l: &[f64], d: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..d {
        let mut acc = 0.0;
        for k in 0..=i {
            acc += l[i * d + k] * v[k];
        }
        out[i] = acc;
    }
}

/// Solves `Lᵀ y = b` in place.
fn solve_upper_transposed(l: &[f64], d: usize, y: &mut [f64]) {
    for i in (0..d).rev() {
        let mut v = y[i];
        for k in (i + 1)..d {
            v -= l[k * d + i] * y[k];
        }
        y[i] = v / l[i * d + i];
    }
}

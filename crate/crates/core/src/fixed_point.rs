//! Monte-Carlo Picard iteration on the grid.
//!
//! `v⁰ = 0` and, for every node `z`,
//! `v^{n+1}(z) = ⌊ (1/M_z) Σ_j R^z_{n+1,j}(P vⁿ) ⌋_B` with the single-draw
//! estimator
//! `R^z(φ) = (√π/θ) √G e^{-(a/θ-1)G} Ũ_{G/θ} f(X^z_{G/θ}, φ(X^z_{G/θ}) Σ)`.
//!
//! Sweeps are Jacobi-style: every node reads the interpolation of the
//! previous iterate. Draws for `(n+1, z)` come from their own counter-based
//! substream (see [`crate::rng`]), so results are bitwise identical for any
//! worker count.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::error_metrics;
use crate::error::{Error, Result};
use crate::grid::{norm, Grid, GridFunction, WeightFunction};
use crate::ou_model::{OuModel, SampleScratch};
use crate::problem::Driver;
use crate::randomized_weight::{RandomizerConfig, ThetaMode};
use crate::rng::substream;

/// Something that can be evaluated as a row vector at any `x ∈ R^d`.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// Coordinates along `axis` where the field may have a kink.
    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }
}

impl VectorField for GridFunction {
    fn dim(&self) -> usize {
        self.grid().dim()
    }

    #[inline]
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.interpolate_into(x, out)
    }

    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        let g = self.grid();
        let n = g.n_tilde() as i64;
        (-n..=n).map(|i| i as f64 * g.delta()).collect()
    }
}

/// Closure-backed field.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// The identically zero field.
pub struct ZeroField(pub usize);

impl VectorField for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval_into(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// Per-node sample sizes `M_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SamplePolicy {
    Constant(usize),
    /// `M_z = ⌈M̃ (1+|z|)² ρ(z)^{-2}⌉`, floored at 1.
    Weighted { m_tilde: f64, rho: WeightFunction },
}

impl SamplePolicy {
    pub fn count(&self, z: &[f64]) -> usize {
        match *self {
            SamplePolicy::Constant(m) => m,
            SamplePolicy::Weighted { m_tilde, rho } => {
                let r = rho.eval(z);
                let m = (m_tilde * (1.0 + norm(z)).powi(2) / (r * r)).ceil();
                if m.is_finite() {
                    (m as usize).max(1)
                } else {
                    1
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub theta: f64,
    pub theta_mode: ThetaMode,
    pub n_iter: usize,
    /// Radius `B` of the truncation ball; `None` is `B = ∞`.
    pub truncation: Option<f64>,
    pub sample_policy: SamplePolicy,
    pub seed: u64,
    /// Worker threads for the node sweep; 1 runs sequentially.
    pub workers: usize,
    /// Reuse the iteration-1 substreams in every sweep.
    pub common_random_numbers: bool,
    /// Stop once `max_z |v^{n+1}(z) - vⁿ(z)|` falls below this value.
    pub early_stop_tol: Option<f64>,
}

impl SchemeConfig {
    pub fn new(theta: f64, n_iter: usize, samples: usize, seed: u64) -> Self {
        Self {
            theta,
            theta_mode: ThetaMode::Strict,
            n_iter,
            truncation: None,
            sample_policy: SamplePolicy::Constant(samples),
            seed,
            workers: 1,
            common_random_numbers: false,
            early_stop_tol: None,
        }
    }
}

/// Empirical mean of `M_z` draws (after truncation) and the componentwise
/// standard error of the untruncated mean.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEstimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Buffers for [`sample_r`].
pub struct SampleBuffers {
    ou: SampleScratch,
    x_s: Vec<f64>,
    u_tilde: Vec<f64>,
    phi: Vec<f64>,
    z_row: Vec<f64>,
}

impl SampleBuffers {
    pub fn new(dim: usize) -> Self {
        Self {
            ou: SampleScratch::new(dim),
            x_s: vec![0.0; dim],
            u_tilde: vec![0.0; dim],
            phi: vec![0.0; dim],
            z_row: vec![0.0; dim],
        }
    }
}

/// One draw of `R^z(φ)` into `out`. Consumes the time normal first, then the
/// `d` state normals.
#[allow(clippy::too_many_arguments)]
pub fn sample_r<R: Rng + ?Sized>(
    model: &OuModel,
    randomizer: &RandomizerConfig,
    driver: &Driver,
    z: &[f64],
    phi: &dyn VectorField,
    rng: &mut R,
    buf: &mut SampleBuffers,
    out: &mut [f64],
) -> Result<()> {
    let draw = randomizer.draw_time(rng);
    model.sample_into(z, draw.s, rng, &mut buf.ou, &mut buf.x_s, &mut buf.u_tilde)?;
    phi.eval_into(&buf.x_s, &mut buf.phi);
    let sigma = model.diffusion();
    let d = model.dim();
    for j in 0..d {
        let mut acc = 0.0;
        for k in 0..d {
            acc += buf.phi[k] * sigma[(k, j)];
        }
        buf.z_row[j] = acc;
    }
    let scale = draw.weight * driver.eval(&buf.x_s, &buf.z_row);
    for (o, u) in out.iter_mut().zip(&buf.u_tilde) {
        *o = scale * u;
    }
    Ok(())
}

/// Euclidean projection onto the closed ball of radius `radius`.
pub fn project_to_ball(v: &mut [f64], radius: Option<f64>) {
    if let Some(b) = radius {
        let n = norm(v);
        if n > b {
            if b <= 0.0 {
                v.iter_mut().for_each(|x| *x = 0.0);
            } else {
                let s = b / n;
                v.iter_mut().for_each(|x| *x *= s);
            }
        }
    }
}

/// Empirical mean of `m` independent draws of `R^z(φ)`, projected on the ball
/// of radius `truncation`.
#[allow(clippy::too_many_arguments)]
pub fn node_update<R: Rng + ?Sized>(
    model: &OuModel,
    randomizer: &RandomizerConfig,
    driver: &Driver,
    z: &[f64],
    phi: &dyn VectorField,
    m: usize,
    truncation: Option<f64>,
    rng: &mut R,
) -> Result<NodeEstimate> {
    if m == 0 {
        return Err(Error::Config("sample size M_z must be at least 1".into()));
    }
    let d = model.dim();
    let mut buf = SampleBuffers::new(d);
    let mut draw = vec![0.0; d];
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for _ in 0..m {
        sample_r(model, randomizer, driver, z, phi, rng, &mut buf, &mut draw)?;
        for k in 0..d {
            sum[k] += draw[k];
            sum_sq[k] += draw[k] * draw[k];
        }
    }
    let mf = m as f64;
    let mut mean: Vec<f64> = sum.iter().map(|s| s / mf).collect();
    let std_err = mean
        .iter()
        .zip(&sum_sq)
        .map(|(mu, sq)| {
            if m < 2 {
                f64::INFINITY
            } else {
                ((sq / mf - mu * mu).max(0.0) * mf / (mf - 1.0) / mf).sqrt()
            }
        })
        .collect();
    project_to_ball(&mut mean, truncation);
    Ok(NodeEstimate { mean, std_err })
}

/// Errors of one iterate against a known solution plus timing.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    /// `𝔈^{d,r}_{∞,n}` for `r = 0, 1, 2` (when `r <= Ñ` and the solution is known).
    pub sup_err: [Option<f64>; 3],
    /// Mean of `ℰ^{d,r}_{∞,n}` for `r = 0, 1, 2`.
    pub mean_err: [Option<f64>; 3],
    /// `max_z ‖vⁿ(z) - v^{n-1}(z)‖`.
    pub successive_diff: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub records: Vec<IterationRecord>,
    pub sample_counts: Vec<usize>,
    pub theta_beyond_proven_range: bool,
    /// Iteration at which the early-stop tolerance was met, if it was.
    pub early_stopped_at: Option<usize>,
    pub total_wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct PicardRun {
    /// `v⁰, v¹, …` (v⁰ = 0).
    pub history: Vec<GridFunction>,
    pub report: RunReport,
}

impl PicardRun {
    pub fn last(&self) -> &GridFunction {
        self.history.last().expect("history starts with v0")
    }
}

pub fn picard_run(
    model: &OuModel,
    grid: &Grid,
    driver: &Driver,
    cfg: &SchemeConfig,
    exact: Option<&dyn VectorField>,
) -> Result<PicardRun> {
    if grid.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "grid has d = {}, model has d = {}",
            grid.dim(),
            model.dim()
        )));
    }
    if cfg.n_iter == 0 {
        return Err(Error::Config("n_iter must be at least 1".into()));
    }
    if let Some(b) = cfg.truncation {
        if !(b >= 0.0) {
            return Err(Error::Config(format!("truncation radius must be >= 0, got {b}")));
        }
    }
    let randomizer = RandomizerConfig::new(cfg.theta, model.abscissa(), cfg.theta_mode)?;
    let nodes: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.node(i)).collect();
    let sample_counts: Vec<usize> = nodes.iter().map(|z| cfg.sample_policy.count(z)).collect();
    if sample_counts.contains(&0) {
        return Err(Error::Config("every node needs M_z >= 1".into()));
    }

    let pool = if cfg.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let start = Instant::now();
    let mut history = vec![GridFunction::zeros(grid)];
    let mut records = Vec::with_capacity(cfg.n_iter);
    let mut early_stopped_at = None;

    for n in 0..cfg.n_iter {
        let sweep_start = Instant::now();
        let previous = history.last().expect("non-empty");
        let stream_iter = if cfg.common_random_numbers { 1 } else { n as u32 + 1 };
        let update = |idx: usize| -> Result<Vec<f64>> {
            let mut rng = substream(cfg.seed, stream_iter, idx as u32);
            node_update(
                model,
                &randomizer,
                driver,
                &nodes[idx],
                previous,
                sample_counts[idx],
                cfg.truncation,
                &mut rng,
            )
            .map(|e| e.mean)
        };
        let rows: Vec<Result<Vec<f64>>> = match &pool {
            Some(pool) => pool.install(|| (0..grid.len()).into_par_iter().map(update).collect()),
            None => (0..grid.len()).map(update).collect(),
        };
        let mut next = GridFunction::zeros(grid);
        for (idx, row) in rows.into_iter().enumerate() {
            next.value_mut(idx).copy_from_slice(&row?);
        }
        if next.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: n + 1 });
        }

        let mut sup_err = [None; 3];
        let mut mean_err = [None; 3];
        if let Some(v) = exact {
            for r in 0..3 {
                if r <= grid.n_tilde() {
                    let rec = error_metrics(&next, v, r)?;
                    sup_err[r] = Some(rec.sup_err);
                    mean_err[r] = Some(rec.mean_err);
                }
            }
        }
        let successive_diff = next.max_distance(previous);
        records.push(IterationRecord {
            n: n + 1,
            sup_err,
            mean_err,
            successive_diff,
            wall_time_s: sweep_start.elapsed().as_secs_f64(),
        });
        history.push(next);
        if let Some(tol) = cfg.early_stop_tol {
            if successive_diff < tol {
                early_stopped_at = Some(n + 1);
                break;
            }
        }
    }

    Ok(PicardRun {
        history,
        report: RunReport {
            records,
            sample_counts,
            theta_beyond_proven_range: randomizer.beyond_proven_range(),
            early_stopped_at,
            total_wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Benchmark;
    use crate::rng::tagged_stream;

    fn bench_1d() -> (OuModel, Driver, RandomizerConfig) {
        let b = Benchmark::new(1.0, 2.0, 1).unwrap();
        let (a, s) = b.model_matrices();
        let model = OuModel::new(a, s).unwrap();
        let r = RandomizerConfig::new(1.8, 2.0, ThetaMode::Strict).unwrap();
        (model, b.driver(), r)
    }

    #[test]
    fn zero_driver_gives_zero_sample() {
        let (model, _, r) = bench_1d();
        let mut rng = tagged_stream(0, 0);
        let mut buf = SampleBuffers::new(1);
        let mut out = [1.0];
        sample_r(&model, &r, &Driver::zero(), &[0.4], &ZeroField(1), &mut rng, &mut buf, &mut out).unwrap();
        assert_eq!(out[0], 0.0);
        let est = node_update(&model, &r, &Driver::zero(), &[0.4], &ZeroField(1), 50, None, &mut rng).unwrap();
        assert_eq!(est.mean, vec![0.0]);
    }

    #[test]
    fn constant_driver_is_centered() {
        let (model, _, r) = bench_1d();
        let mut rng = tagged_stream(1, 0);
        let est = node_update(&model, &r, &Driver::constant(3.0), &[0.7], &ZeroField(1), 400_000, None, &mut rng).unwrap();
        assert!(est.mean[0].abs() < 5.0 * est.std_err[0], "{est:?}");
    }

    #[test]
    fn unbiased_at_origin_for_exact_solution() {
        let (model, f, r) = bench_1d();
        let v = FnField::new(1, Benchmark::v_into);
        let mut rng = tagged_stream(2, 0);
        let est = node_update(&model, &r, &f, &[0.0], &v, 400_000, None, &mut rng).unwrap();
        assert!(est.mean[0].abs() < 5.0 * est.std_err[0], "{est:?}");
    }

    #[test]
    fn ball_projection() {
        let mut v = [3.0, 0.0, 4.0];
        project_to_ball(&mut v, Some(1.0));
        assert!((norm(&v) - 1.0).abs() < 1e-15);
        assert!((v[0] / v[2] - 0.75).abs() < 1e-15);
        let mut w = [0.3, -0.2];
        project_to_ball(&mut w, Some(0.0));
        assert_eq!(w, [0.0, 0.0]);
        let mut u = [0.3, -0.2];
        project_to_ball(&mut u, None);
        assert_eq!(u, [0.3, -0.2]);
    }

    #[test]
    fn zero_truncation_radius() {
        let (model, f, r) = bench_1d();
        let v = FnField::new(1, Benchmark::v_into);
        let mut rng = tagged_stream(3, 0);
        let est = node_update(&model, &r, &f, &[0.5], &v, 100, Some(0.0), &mut rng).unwrap();
        assert_eq!(est.mean, vec![0.0]);
    }

    #[test]
    fn weighted_policy_counts() {
        let p = SamplePolicy::Weighted {
            m_tilde: 100.0,
            rho: WeightFunction::Exponential { alpha: 1.0 },
        };
        assert_eq!(p.count(&[0.0]), 100);
        // (1+2)² e^{-4} · 100 = 16.48 → 17
        assert_eq!(p.count(&[2.0]), 17);
        assert_eq!(p.count(&[40.0]), 1);
        assert_eq!(SamplePolicy::Constant(7).count(&[5.0]), 7);
    }

    #[test]
    fn rejects_zero_samples_and_bad_theta() {
        let (model, f, _) = bench_1d();
        let grid = Grid::new(1, 0.5, 2).unwrap();
        let cfg = SchemeConfig::new(1.8, 1, 0, 1);
        assert!(matches!(picard_run(&model, &grid, &f, &cfg, None), Err(Error::Config(_))));
        let cfg = SchemeConfig::new(2.5, 1, 10, 1);
        assert!(matches!(picard_run(&model, &grid, &f, &cfg, None), Err(Error::InvalidTheta { .. })));
        let mut soft = SchemeConfig::new(2.5, 1, 10, 1);
        soft.theta_mode = ThetaMode::Soft;
        let run = picard_run(&model, &grid, &f, &soft, None).unwrap();
        assert!(run.report.theta_beyond_proven_range);
    }

    #[test]
    fn early_stop_is_reported() {
        let model = OuModel::isotropic(1, 2.0, 1.0).unwrap();
        let grid = Grid::new(1, 0.5, 2).unwrap();
        let mut cfg = SchemeConfig::new(1.8, 5, 10, 1);
        cfg.early_stop_tol = Some(1e-12);
        let run = picard_run(&model, &grid, &Driver::zero(), &cfg, None).unwrap();
        assert_eq!(run.report.early_stopped_at, Some(1));
        assert_eq!(run.history.len(), 2);
    }
}

//! Experiment configuration and orchestration behind the `ebsde` binary.
//!
//! A run is described by a TOML file with four tables:
//!
//! ```toml
//! [model]
//! dim = 1
//! a = 2.0          # A = aI, or `drift = [[...]]` / `drift_file = "A.txt"`
//! sigma = 1.0      # Σ = σI, or `diffusion = [[...]]` / `diffusion_file`
//!
//! [driver]
//! kind = "benchmark"
//! gamma = 1.0
//!
//! [scheme]
//! theta = 1.8
//! n_tilde = 10
//! delta = 0.2
//! samples = 100000
//! n_iter = 6
//! seed = 1
//!
//! [outputs]
//! directory = "out/figure1"
//! ```
//!
//! Every CSV is deterministic for a fixed seed. Wall times go to a separate
//! `timing.csv`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    kappa_remark_bound, kappa_upper_bound, lambda_estimate, reconstruct_u, KappaBranch,
    KappaReport, KappaWeight, LambdaEstimate, LambdaMethod,
};
use crate::error::{Error, Result};
use crate::fixed_point::{picard_run, IterationRecord, SamplePolicy, SchemeConfig, VectorField};
use crate::grid::{fmt_f64, Grid, GridFunction, WeightFunction};
use crate::oracle::{phi_infinity, QuadSpec};
use crate::ou_model::{CaSource, OuModel};
use crate::problem::{benchmark_generator_value, Benchmark, Driver, ExactGradient};
use crate::randomized_weight::{RandomizerConfig, ThetaMode};
use crate::rng::{derive_seed, tagged_stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub driver: DriverConfig,
    pub scheme: SchemeBlock,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion_file: Option<PathBuf>,
    /// User-supplied `C_A`, replacing the grid estimate for non-symmetric `A`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DriverConfig {
    /// The test problem with known solution; `a` defaults to the model's.
    Benchmark {
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<f64>,
    },
    Zero,
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeBlock {
    /// Defaults to `0.9 a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default)]
    pub theta_mode: ThetaMode,
    pub n_tilde: usize,
    pub delta: f64,
    /// Constant `M`; exclusive with `m_tilde`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<WeightFunction>,
    /// Radius `B`; absent means no truncation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    pub n_iter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub common_random_numbers: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMethodName {
    Auto,
    Quadrature,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "yes")]
    pub snapshots: bool,
    #[serde(default = "yes")]
    pub lambda: bool,
    #[serde(default = "default_lambda_method")]
    pub lambda_method: LambdaMethodName,
    #[serde(default = "default_lambda_samples")]
    pub lambda_samples: usize,
    #[serde(default = "default_lambda_points")]
    pub lambda_points: usize,
    #[serde(default = "yes")]
    pub u_slice: bool,
    #[serde(default = "default_slice_points")]
    pub u_slice_points: usize,
    #[serde(default = "yes")]
    pub kappa: bool,
    /// Exponential or polynomial weight for the contraction bound. Defaults
    /// to exponential with a tiny `α` when `C_A = 1`, else polynomial `(1, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_weight: Option<WeightFunction>,
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "default_probes")]
    pub oracle_probes: Vec<f64>,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            snapshots: true,
            lambda: true,
            lambda_method: default_lambda_method(),
            lambda_samples: default_lambda_samples(),
            lambda_points: default_lambda_points(),
            u_slice: true,
            u_slice_points: default_slice_points(),
            kappa: true,
            kappa_weight: None,
            oracle: false,
            oracle_probes: default_probes(),
        }
    }
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_directory() -> PathBuf {
    PathBuf::from("out")
}
fn default_lambda_method() -> LambdaMethodName {
    LambdaMethodName::Auto
}
fn default_lambda_samples() -> usize {
    1_000_000
}
fn default_lambda_points() -> usize {
    64
}
fn default_slice_points() -> usize {
    81
}
fn default_probes() -> Vec<f64> {
    vec![-2.0, -1.0, 0.0, 1.0, 2.0]
}

/// Parameters accepted by `run_sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Gamma,
    Theta,
    Delta,
    Samples,
    NTilde,
    Dim,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gamma" => SweepParam::Gamma,
            "theta" => SweepParam::Theta,
            "delta" => SweepParam::Delta,
            "M" | "m" | "samples" => SweepParam::Samples,
            "n_tilde" => SweepParam::NTilde,
            "d" | "dim" => SweepParam::Dim,
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter '{other}' (expected gamma, theta, delta, M, n_tilde or d)"
                )))
            }
        })
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Theta => "theta",
            SweepParam::Delta => "delta",
            SweepParam::Samples => "M",
            SweepParam::NTilde => "n_tilde",
            SweepParam::Dim => "d",
        }
    }
}

/// Everything needed to run the scheme, built from a config.
pub struct Resolved {
    pub model: OuModel,
    pub grid: Grid,
    pub driver: Driver,
    pub scheme: SchemeConfig,
    /// Set when the exact solution is known (benchmark driver, `A = aI`, `Σ = I`).
    pub benchmark: Option<Benchmark>,
    /// `(a, σ)` when the model was given as `A = aI`, `Σ = σI`.
    pub isotropic: Option<(f64, f64)>,
}

impl Resolved {
    pub fn exact_v(&self) -> Option<ExactGradient> {
        self.benchmark.map(|b| Benchmark::exact_field(b.dim))
    }
}

impl ExperimentConfig {
    /// Parses a TOML document, applying `key.path=value` overrides first.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative matrix file paths resolve against the
    /// config's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.model.drift_file, &mut cfg.model.diffusion_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let m = &self.model;
        let d = m.dim;
        if d == 0 {
            return Err(Error::Config("model.dim must be >= 1".into()));
        }
        let drift = matrix_source(d, "drift", m.a, m.drift.as_ref(), m.drift_file.as_deref())?
            .ok_or_else(|| Error::Config("model needs one of a, drift, drift_file".into()))?;
        let diffusion = matrix_source(d, "diffusion", m.sigma, m.diffusion.as_ref(), m.diffusion_file.as_deref())?
            .unwrap_or_else(|| DMatrix::identity(d, d));
        let isotropic = match (m.a, m.drift.is_none() && m.drift_file.is_none()) {
            (Some(a), true) if m.diffusion.is_none() && m.diffusion_file.is_none() => {
                Some((a, m.sigma.unwrap_or(1.0)))
            }
            _ => None,
        };
        let mut model = OuModel::new(drift.clone(), diffusion.clone())?;
        if let Some(c) = m.c_a {
            model = model.with_c_a(c)?;
        }

        let (driver, benchmark) = match self.driver {
            DriverConfig::Benchmark { gamma, a } => {
                let a_drv = a.unwrap_or(model.abscissa());
                let b = Benchmark::new(gamma, a_drv, d)?;
                let (ba, bs) = b.model_matrices();
                let exact = drift == ba && diffusion == bs;
                (b.driver(), exact.then_some(b))
            }
            DriverConfig::Zero => (Driver::zero(), None),
            DriverConfig::Constant { value } => (Driver::constant(value), None),
        };

        let s = &self.scheme;
        let grid = Grid::new(d, s.delta, s.n_tilde)?;
        let sample_policy = match (s.samples, s.m_tilde) {
            (Some(mz), None) => SamplePolicy::Constant(mz),
            (None, Some(m_tilde)) => SamplePolicy::Weighted {
                m_tilde,
                rho: s.rho.unwrap_or(WeightFunction::Unit),
            },
            _ => {
                return Err(Error::Config(
                    "scheme needs exactly one of samples or m_tilde".into(),
                ))
            }
        };
        let theta = s.theta.unwrap_or(0.9 * model.abscissa());
        let scheme = SchemeConfig {
            theta,
            theta_mode: s.theta_mode,
            n_iter: s.n_iter,
            truncation: s.truncation,
            sample_policy,
            seed: s.seed,
            workers: s.workers.max(1),
            common_random_numbers: s.common_random_numbers,
            early_stop_tol: s.early_stop_tol,
        };
        RandomizerConfig::new(theta, model.abscissa(), s.theta_mode)?;
        Ok(Resolved {
            model,
            grid,
            driver,
            scheme,
            benchmark,
            isotropic,
        })
    }

    /// The config with defaults made explicit, as echoed next to the outputs.
    pub fn resolved_copy(&self, r: &Resolved) -> Self {
        let mut out = self.clone();
        out.scheme.theta = Some(r.scheme.theta);
        out
    }

    fn apply_sweep(&mut self, param: SweepParam, raw: &str) -> Result<()> {
        let bad = |e: String| Error::Config(format!("sweep value '{raw}' for {}: {e}", param.name()));
        let real = || raw.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
        let int = || raw.trim().parse::<f64>().map_err(|e| bad(e.to_string())).and_then(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(bad("expected a non-negative integer".into()))
            }
        });
        match param {
            SweepParam::Gamma => match &mut self.driver {
                DriverConfig::Benchmark { gamma, .. } => *gamma = real()?,
                _ => return Err(bad("gamma sweeps need the benchmark driver".into())),
            },
            SweepParam::Theta => self.scheme.theta = Some(real()?),
            SweepParam::Delta => self.scheme.delta = real()?,
            SweepParam::Samples => {
                self.scheme.samples = Some(int()?);
                self.scheme.m_tilde = None;
            }
            SweepParam::NTilde => self.scheme.n_tilde = int()?,
            SweepParam::Dim => {
                if self.model.drift.is_some()
                    || self.model.drift_file.is_some()
                    || self.model.diffusion.is_some()
                    || self.model.diffusion_file.is_some()
                {
                    return Err(bad("dimension sweeps need a scalar model (a, sigma)".into()));
                }
                self.model.dim = int()?;
            }
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key.path=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one item");
    let mut cur = table;
    for k in parents {
        cur = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path '{path}' crosses a non-table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn matrix_source(
    dim: usize,
    name: &str,
    scalar: Option<f64>,
    inline: Option<&Vec<Vec<f64>>>,
    file: Option<&Path>,
) -> Result<Option<DMatrix<f64>>> {
    let given = scalar.is_some() as u8 + inline.is_some() as u8 + file.is_some() as u8;
    if given > 1 {
        return Err(Error::Config(format!("{name}: give only one of the scalar, inline or file forms")));
    }
    let rows: Vec<Vec<f64>> = if let Some(s) = scalar {
        return Ok(Some(DMatrix::identity(dim, dim) * s));
    } else if let Some(rows) = inline {
        rows.clone()
    } else if let Some(path) = file {
        read_matrix_file(path)?
    } else {
        return Ok(None);
    };
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch(format!("{name} must be {dim}x{dim}")));
    }
    Ok(Some(DMatrix::from_fn(dim, dim, |i, j| rows[i][j])))
}

/// Rows of numbers separated by commas or whitespace; `#` starts a comment.
fn read_matrix_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(rows)
}

/// What `run_solve` hands back besides the files it writes.
#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub directory: PathBuf,
    pub records: Vec<IterationRecord>,
    pub lambda: Option<LambdaEstimate>,
    pub kappa: Option<KappaReport>,
    pub theta_beyond_proven_range: bool,
}

pub fn run_solve(cfg: &ExperimentConfig) -> Result<SolveSummary> {
    run_solve_with(cfg, None)
}

/// Like `run_solve`, with an optional driver that replaces the configured one.
pub fn run_solve_with(cfg: &ExperimentConfig, driver: Option<Driver>) -> Result<SolveSummary> {
    let mut resolved = cfg.resolve()?;
    if let Some(drv) = driver {
        resolved.driver = drv;
        resolved.benchmark = None;
    }
    let out = &cfg.outputs;
    let dir = out.directory.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.resolved.toml"), cfg.resolved_copy(&resolved).to_toml()?)?;

    let exact = resolved.exact_v();
    let run = picard_run(
        &resolved.model,
        &resolved.grid,
        &resolved.driver,
        &resolved.scheme,
        exact.as_ref().map(|v| v as &dyn VectorField),
    )?;

    write_errors(&dir.join("errors.csv"), &run.report.records)?;
    let mut timing = csv::Writer::from_path(dir.join("timing.csv"))?;
    timing.write_record(["n", "wall_time_s"])?;
    for r in &run.report.records {
        timing.write_record([r.n.to_string(), fmt_f64(r.wall_time_s)])?;
    }
    timing.flush()?;

    if out.snapshots {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        for (n, gf) in run.history.iter().enumerate().skip(1) {
            let f = fs::File::create(snap_dir.join(format!("iterate_{n:03}.csv")))?;
            gf.write_csv(std::io::BufWriter::new(f))?;
        }
    }

    let last = run.last();
    let lambda = if out.lambda {
        let method = lambda_method(out, resolved.model.dim(), resolved.scheme.seed)?;
        let est = lambda_estimate(&resolved.model, &resolved.driver, last, method)?;
        let mut w = csv::Writer::from_path(dir.join("lambda.csv"))?;
        w.write_record(["method", "value", "std_err", "exact"])?;
        let name = match method {
            LambdaMethod::MonteCarlo { .. } => "mc",
            LambdaMethod::Quadrature { .. } => "quadrature",
        };
        let exact = resolved.benchmark.map(|b| fmt_f64(b.lambda())).unwrap_or_default();
        w.write_record([name.to_string(), fmt_f64(est.value), fmt_f64(est.std_err), exact])?;
        w.flush()?;
        Some(est)
    } else {
        None
    };

    if out.u_slice {
        write_u_slice(&dir.join("u_slice.csv"), last, out.u_slice_points, resolved.benchmark.is_some())?;
    }

    let kappa = if out.kappa {
        let rows = kappa_rows(&resolved, out.kappa_weight)?;
        write_kappa(&dir.join("kappa.csv"), &rows)?;
        rows.into_iter().find(|r| r.0 == "bound").map(|r| r.1)
    } else {
        None
    };

    if out.oracle {
        let rows = oracle_rows(&resolved, last, &out.oracle_probes)?;
        write_oracle(fs::File::create(dir.join("oracle.csv"))?, &rows)?;
    }

    Ok(SolveSummary {
        directory: dir,
        records: run.report.records,
        lambda,
        kappa,
        theta_beyond_proven_range: run.report.theta_beyond_proven_range,
    })
}

fn lambda_method(out: &OutputsConfig, dim: usize, seed: u64) -> Result<LambdaMethod> {
    Ok(match out.lambda_method {
        LambdaMethodName::Auto => match LambdaMethod::default_for(dim, seed) {
            LambdaMethod::Quadrature { .. } => LambdaMethod::Quadrature {
                points: out.lambda_points,
            },
            LambdaMethod::MonteCarlo { .. } => LambdaMethod::MonteCarlo {
                samples: out.lambda_samples,
                seed,
            },
        },
        LambdaMethodName::Quadrature => LambdaMethod::Quadrature {
            points: out.lambda_points,
        },
        LambdaMethodName::Mc => LambdaMethod::MonteCarlo {
            samples: out.lambda_samples,
            seed,
        },
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_errors(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "n",
        "sup_error_r0",
        "sup_error_r1",
        "sup_error_r2",
        "mean_error_r0",
        "mean_error_r1",
        "mean_error_r2",
        "successive_diff",
    ])?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            opt(r.sup_err[0]),
            opt(r.sup_err[1]),
            opt(r.sup_err[2]),
            opt(r.mean_err[0]),
            opt(r.mean_err[1]),
            opt(r.mean_err[2]),
            fmt_f64(r.successive_diff),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Slice along the first axis. `u` is normalised by `u(0) = 0`; with a known
/// solution the shifted exact values `e^{-|x|²} - 1` are added.
fn write_u_slice(path: &Path, v: &GridFunction, points: usize, exact: bool) -> Result<()> {
    let grid = v.grid();
    let d = grid.dim();
    let mut header = vec!["x".to_string(), "u".to_string()];
    header.extend((1..=d).map(|k| format!("v{k}")));
    if exact {
        header.push("u_exact_shifted".into());
        header.extend((1..=d).map(|k| format!("v_exact{k}")));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    let h = grid.half_width();
    let points = points.max(2);
    for k in 0..points {
        let t = -h + 2.0 * h * k as f64 / (points - 1) as f64;
        let mut x = vec![0.0; d];
        x[0] = t;
        let mut row = vec![fmt_f64(t), fmt_f64(reconstruct_u(v, &x, 64)?)];
        row.extend(v.interpolate(&x).into_iter().map(fmt_f64));
        if exact {
            row.push(fmt_f64(Benchmark::u(&x) - 1.0));
            row.extend(Benchmark::v(&x).into_iter().map(fmt_f64));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `("bound", report)` from the general bound plus, for `A = aI`, `Σ = σI`,
/// a `("remark", report)` row from the isotropic formula.
pub fn kappa_rows(r: &Resolved, weight: Option<WeightFunction>) -> Result<Vec<(&'static str, KappaReport)>> {
    let k_fz = r.driver.k_fz();
    let weight = match weight {
        Some(WeightFunction::Exponential { alpha }) => KappaWeight::Exponential { alpha },
        Some(WeightFunction::Polynomial { alpha, beta }) => KappaWeight::Polynomial { alpha, beta },
        Some(WeightFunction::Unit) => KappaWeight::Exponential { alpha: 0.0 },
        None if r.model.c_a() <= 1.0 => KappaWeight::Exponential { alpha: 1e-6 },
        None => KappaWeight::Polynomial { alpha: 1.0, beta: 1.0 },
    };
    let bound = kappa_upper_bound(&r.model, k_fz, weight)?;
    let mut rows = vec![("bound", bound.clone())];
    if let (Some((a, sigma)), KappaWeight::Exponential { alpha }) = (r.isotropic, weight) {
        let k = kappa_remark_bound(a, sigma, r.model.dim(), k_fz, alpha);
        rows.push((
            "remark",
            KappaReport {
                branch: KappaBranch::SymmetricExponential,
                kappa_upper: k,
                contractive: k < 1.0,
                c1: f64::NAN,
                c2: f64::NAN,
                possibly_underestimated: false,
                ..bound
            },
        ));
    }
    Ok(rows)
}

fn write_kappa(path: &Path, rows: &[(&str, KappaReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "source",
        "branch",
        "alpha",
        "beta",
        "kappa_upper",
        "contractive",
        "k_fz",
        "sigma_norm",
        "d",
        "a",
        "c_a",
        "c1",
        "c2",
        "possibly_underestimated",
    ])?;
    let nan_blank = |v: f64| if v.is_nan() { String::new() } else { fmt_f64(v) };
    for (source, k) in rows {
        let branch = match k.branch {
            KappaBranch::SymmetricExponential => "symmetric_exponential",
            KappaBranch::GeneralPolynomial => "general_polynomial",
        };
        w.write_record([
            source.to_string(),
            branch.to_string(),
            fmt_f64(k.alpha),
            opt(k.beta),
            fmt_f64(k.kappa_upper),
            k.contractive.to_string(),
            fmt_f64(k.k_fz),
            fmt_f64(k.sigma_norm),
            k.dim.to_string(),
            fmt_f64(k.a),
            fmt_f64(k.c_a),
            nan_blank(k.c1),
            nan_blank(k.c2),
            k.possibly_underestimated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One oracle probe: `Φ_∞(w)(x)` next to `w(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub x: f64,
    pub phi: f64,
    pub w: f64,
}

pub fn oracle_rows(r: &Resolved, w: &dyn VectorField, probes: &[f64]) -> Result<Vec<OracleRow>> {
    let spec = QuadSpec::default();
    probes
        .iter()
        .map(|&x| {
            Ok(OracleRow {
                x,
                phi: phi_infinity(&r.model, &r.driver, w, x, &spec)?,
                w: w.eval(&[x])[0],
            })
        })
        .collect()
}

pub fn write_oracle<W: Write>(writer: W, rows: &[OracleRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "phi", "w", "residual"])?;
    for r in rows {
        w.write_record([fmt_f64(r.x), fmt_f64(r.phi), fmt_f64(r.w), fmt_f64((r.phi - r.w).abs())])?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one sweep point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: String,
    pub seed: u64,
    pub outcome: std::result::Result<SolveSummary, Error>,
}

/// One `run_solve` per value in `<directory>/sweep_<param>/<k>`, with seed
/// `derive_seed(seed, k)`, and a consolidated `sweep.csv`. Failed points are
/// recorded and the sweep goes on.
pub fn run_sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[String]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let root = cfg.outputs.directory.clone();
    fs::create_dir_all(&root)?;
    let mut points = Vec::with_capacity(values.len());
    for (k, raw) in values.iter().enumerate() {
        let mut c = cfg.clone();
        let seed = derive_seed(cfg.scheme.seed, k as u64);
        c.scheme.seed = seed;
        c.outputs.directory = root.join(format!("sweep_{}", param.name())).join(k.to_string());
        let outcome = c.apply_sweep(param, raw).and_then(|_| run_solve(&c));
        points.push(SweepPoint {
            value: raw.trim().to_string(),
            seed,
            outcome,
        });
    }
    write_sweep(&root.join("sweep.csv"), param, &points)?;
    Ok(points)
}

fn write_sweep(path: &Path, param: SweepParam, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "param",
        "value",
        "seed",
        "status",
        "n",
        "sup_error_r0",
        "sup_error_r1",
        "sup_error_r2",
        "mean_error_r0",
        "mean_error_r1",
        "mean_error_r2",
        "successive_diff",
        "lambda",
        "lambda_std_err",
        "kappa_upper",
    ])?;
    for p in points {
        let head = [param.name().to_string(), p.value.clone(), p.seed.to_string()];
        match &p.outcome {
            Ok(s) => {
                let lam = s.lambda.map(|l| (fmt_f64(l.value), fmt_f64(l.std_err))).unwrap_or_default();
                let kap = s.kappa.as_ref().map(|k| fmt_f64(k.kappa_upper)).unwrap_or_default();
                for r in &s.records {
                    let mut row = head.to_vec();
                    row.extend([
                        "ok".to_string(),
                        r.n.to_string(),
                        opt(r.sup_err[0]),
                        opt(r.sup_err[1]),
                        opt(r.sup_err[2]),
                        opt(r.mean_err[0]),
                        opt(r.mean_err[1]),
                        opt(r.mean_err[2]),
                        fmt_f64(r.successive_diff),
                        lam.0.clone(),
                        lam.1.clone(),
                        kap.clone(),
                    ]);
                    w.write_record(&row)?;
                }
            }
            Err(e) => {
                let mut row = head.to_vec();
                row.push(format!("error: {e}"));
                row.extend(std::iter::repeat_n(String::new(), 11));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One line of the `selftest` report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Randomised-time identity, driver PDE identity and interpolation checks.
pub fn selftest() -> Vec<Check> {
    use rand::Rng;
    let mut checks = Vec::new();

    let randomizer = RandomizerConfig::new(1.8, 2.0, ThetaMode::Strict).expect("valid theta");
    type Case<'a> = (&'a str, &'a dyn Fn(f64) -> f64, Option<f64>);
    let cases: [Case; 3] = [
        ("time identity phi=1", &|_| 1.0, None),
        ("time identity phi=s", &|s| s, None),
        ("time identity phi=cos(s), T=1", &|s: f64| s.cos(), Some(1.0)),
    ];
    for (k, (name, phi, horizon)) in cases.into_iter().enumerate() {
        let mut rng = tagged_stream(2024, k as u64);
        let c = match randomizer.expectation_identity_check(phi, horizon, 400_000, &mut rng) {
            Ok(r) => {
                let z = (r.mc_estimate - r.quadrature).abs() / r.mc_std_error;
                Check {
                    name: name.into(),
                    passed: z < 5.0,
                    detail: format!("mc {:.6} quad {:.6} ({z:.2} SE)", r.mc_estimate, r.quadrature),
                }
            }
            Err(e) => Check {
                name: name.into(),
                passed: false,
                detail: e.to_string(),
            },
        };
        checks.push(c);
    }

    let mut rng = tagged_stream(2024, 100);
    for d in 1..=3 {
        let b = Benchmark::new(1.0, 2.0, d).expect("valid benchmark");
        let (a, s) = b.model_matrices();
        let f = b.driver();
        let worst = (0..1000)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..=3.0)).collect();
                (benchmark_generator_value(&f, &a, &s, &x) - 1.0).abs()
            })
            .fold(0.0, f64::max);
        checks.push(Check {
            name: format!("PDE identity d={d}"),
            passed: worst <= 1e-9,
            detail: format!("max residual {worst:.3e}"),
        });
    }

    for d in 1..=3 {
        let grid = Grid::new(d, 0.3, 3).expect("valid grid");
        let affine = |x: &[f64], out: &mut [f64]| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = 0.5 - 1.5 * k as f64 + x.iter().enumerate().map(|(j, xi)| (j as f64 + 1.0) * xi).sum::<f64>();
            }
        };
        let gf = GridFunction::from_fn(&grid, affine);
        let h = grid.half_width();
        let (mut pu, mut ex) = (0.0f64, 0.0f64);
        let mut expect = vec![0.0; d];
        for _ in 0..500 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-h..=h)).collect();
            let sum: f64 = (0..grid.len()).map(|i| grid.hat_basis(i, &x)).sum();
            pu = pu.max((sum - 1.0).abs());
            affine(&x, &mut expect);
            let got = gf.interpolate(&x);
            ex = ex.max(got.iter().zip(&expect).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max));
        }
        checks.push(Check {
            name: format!("interpolation d={d}"),
            passed: pu <= 1e-12 && ex <= 1e-12,
            detail: format!("partition of unity {pu:.2e}, affine exactness {ex:.2e}"),
        });
    }
    checks
}

/// `C_A` provenance for reports.
pub fn c_a_label(model: &OuModel) -> &'static str {
    match model.c_a_source() {
        CaSource::Symmetric => "symmetric",
        CaSource::Estimated => "estimated",
        CaSource::User => "user",
    }
}

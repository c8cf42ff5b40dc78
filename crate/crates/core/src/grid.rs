//! Centered hypercube lattice, hat-function basis and the interpolation
//! operator `P`.
//!
//! Nodes are `(i_1 δ, …, i_d δ)` with `i_k ∈ {-Ñ, …, Ñ}`, linearised in
//! row-major order (last coordinate fastest). Points outside the box
//! `[-Ñδ, Ñδ]^d` are clamped onto it before interpolating. Cells are
//! half-open `[z, z+δ)`; a point on a shared face uses the lower cell, except
//! on the upper boundary of the box.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    delta: f64,
    n_tilde: usize,
    side: usize,
    len: usize,
}

impl Grid {
    pub fn new(dim: usize, delta: f64, n_tilde: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("grid dimension must be positive".into()));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Config(format!("grid mesh must be positive, got {delta}")));
        }
        let side = 2 * n_tilde + 1;
        let len = side
            .checked_pow(dim as u32)
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| Error::Config(format!("grid with {side}^{dim} nodes is too large")))?;
        Ok(Self {
            dim,
            delta,
            n_tilde,
            side,
            len,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_tilde(&self) -> usize {
        self.n_tilde
    }

    /// Number of nodes per axis, `2Ñ + 1`.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Node count `N = (2Ñ+1)^d`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `Ñδ`, the half-width of the box.
    pub fn half_width(&self) -> f64 {
        self.n_tilde as f64 * self.delta
    }

    /// Signed lattice coordinates `(i_1, …, i_d)` of node `idx`.
    pub fn multi_index(&self, idx: usize) -> Vec<i64> {
        let mut out = vec![0i64; self.dim];
        let mut rem = idx;
        for k in (0..self.dim).rev() {
            out[k] = (rem % self.side) as i64 - self.n_tilde as i64;
            rem /= self.side;
        }
        out
    }

    /// Inverse of [`Self::multi_index`]; `None` if outside the lattice.
    pub fn linear_index(&self, multi: &[i64]) -> Option<usize> {
        if multi.len() != self.dim {
            return None;
        }
        let mut idx = 0usize;
        for &i in multi {
            let shifted = i + self.n_tilde as i64;
            if shifted < 0 || shifted >= self.side as i64 {
                return None;
            }
            idx = idx * self.side + shifted as usize;
        }
        Some(idx)
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .into_iter()
            .map(|i| i as f64 * self.delta)
            .collect()
    }

    /// Index of the origin node.
    pub fn origin(&self) -> usize {
        self.len / 2
    }

    /// `ψ_z(x) = ∏_k (1 - |x_k - z_k| / δ)_+`.
    pub fn hat_basis(&self, idx: usize, x: &[f64]) -> f64 {
        self.node(idx)
            .iter()
            .zip(x)
            .map(|(z, xk)| (1.0 - ((xk - z) / self.delta).abs()).max(0.0))
            .product()
    }

    /// Euclidean projection onto the box, i.e. a componentwise clamp.
    pub fn project_to_box(&self, x: &[f64]) -> Vec<f64> {
        let h = self.half_width();
        x.iter().map(|v| v.clamp(-h, h)).collect()
    }

    /// Nodes whose coordinates all satisfy `|i_k| <= Ñ - r`.
    pub fn interior_nodes(&self, r: usize) -> Result<Vec<usize>> {
        if r > self.n_tilde {
            return Err(Error::MarginTooLarge {
                r,
                n_tilde: self.n_tilde,
            });
        }
        let lim = (self.n_tilde - r) as i64;
        Ok((0..self.len)
            .filter(|&idx| self.multi_index(idx).iter().all(|i| i.abs() <= lim))
            .collect())
    }

    /// Cell origin (per-axis lower node offset in `0..side`) and local coordinates.
    fn locate(&self, x: &[f64], lower: &mut [usize], frac: &mut [f64]) {
        let h = self.half_width();
        let last_cell = self.side.saturating_sub(2);
        for k in 0..self.dim {
            let xc = x[k].clamp(-h, h);
            let mut u = (xc + h) / self.delta;
            let r = u.round();
            if (u - r).abs() <= 4.0 * f64::EPSILON * r.abs().max(1.0) {
                u = r;
            }
            let i = (u.floor().max(0.0) as usize).min(last_cell);
            lower[k] = i;
            frac[k] = if self.side == 1 { 0.0 } else { (u - i as f64).clamp(0.0, 1.0) };
        }
    }
}

/// Row-vector (`1×d`) values attached to the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.len() * grid.dim()],
            grid: grid.clone(),
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut gf = Self::zeros(grid);
        let d = grid.dim();
        for idx in 0..grid.len() {
            let z = grid.node(idx);
            f(&z, &mut gf.values[idx * d..(idx + 1) * d]);
        }
        gf
    }

    /// Builds from a flat node-major value array of length `N·d`.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * grid.dim() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values, got {}",
                grid.len() * grid.dim(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("grid function values must be finite".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, idx: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.values[idx * d..(idx + 1) * d]
    }

    pub fn value_mut(&mut self, idx: usize) -> &mut [f64] {
        let d = self.grid.dim();
        &mut self.values[idx * d..(idx + 1) * d]
    }

    /// `max_z ‖φ(z)‖`.
    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| norm(self.value(i)))
            .fold(0.0, f64::max)
    }

    /// `max_z ‖φ(z) - ψ(z)‖`.
    pub fn max_distance(&self, other: &GridFunction) -> f64 {
        (0..self.grid.len())
            .map(|i| {
                self.value(i)
                    .iter()
                    .zip(other.value(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// The operator `P`: multilinear interpolation on the enclosing cell,
    /// after clamping `x` onto the box.
    pub fn interpolate_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.grid.dim();
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.grid.side == 1 {
            out.copy_from_slice(self.value(0));
            return;
        }
        let mut lower = [0usize; 16];
        let mut frac = [0f64; 16];
        let (lower, frac) = if d <= 16 {
            (&mut lower[..d], &mut frac[..d])
        } else {
            // high dimension: fall back to heap buffers
            return self.interpolate_heap(x, out);
        };
        self.grid.locate(x, lower, frac);
        let side = self.grid.side;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for k in 0..d {
                let up = (corner >> (d - 1 - k)) & 1 == 1;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                idx = idx * side + lower[k] + up as usize;
            }
            if w == 0.0 {
                continue;
            }
            let v = &self.values[idx * d..(idx + 1) * d];
            for (o, vi) in out.iter_mut().zip(v) {
                *o += w * vi;
            }
        }
    }

    fn interpolate_heap(&self, x: &[f64], out: &mut [f64]) {
        let d = self.grid.dim();
        let mut lower = vec![0usize; d];
        let mut frac = vec![0f64; d];
        self.grid.locate(x, &mut lower, &mut frac);
        let side = self.grid.side;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for k in 0..d {
                let up = (corner >> (d - 1 - k)) & 1 == 1;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                idx = idx * side + lower[k] + up as usize;
            }
            if w != 0.0 {
                for (o, vi) in out.iter_mut().zip(&self.values[idx * d..(idx + 1) * d]) {
                    *o += w * vi;
                }
            }
        }
    }

    pub fn interpolate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.dim()];
        self.interpolate_into(x, &mut out);
        out
    }

    /// CSV with columns `i1..id, x1..xd, v1..vd`, row-major node order,
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let d = self.grid.dim();
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=d)
            .map(|k| format!("i{k}"))
            .chain((1..=d).map(|k| format!("x{k}")))
            .chain((1..=d).map(|k| format!("v{k}")))
            .collect();
        w.write_record(&header)?;
        for idx in 0..self.grid.len() {
            let mi = self.grid.multi_index(idx);
            let z = self.grid.node(idx);
            let record: Vec<String> = mi
                .iter()
                .map(|i| i.to_string())
                .chain(z.iter().map(|v| fmt_f64(*v)))
                .chain(self.value(idx).iter().map(|v| fmt_f64(*v)))
                .collect();
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`Self::write_csv`] back onto `grid`.
    pub fn read_csv<R: Read>(grid: &Grid, reader: R) -> Result<Self> {
        let d = grid.dim();
        let mut r = csv::Reader::from_reader(reader);
        let mut gf = Self::zeros(grid);
        let mut seen = vec![false; grid.len()];
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 3 * d {
                return Err(Error::Io(format!("expected {} columns, got {}", 3 * d, rec.len())));
            }
            let mi: Vec<i64> = (0..d)
                .map(|k| rec[k].trim().parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Io(e.to_string()))?;
            let idx = grid
                .linear_index(&mi)
                .ok_or_else(|| Error::Io(format!("node {mi:?} outside grid")))?;
            for k in 0..d {
                gf.value_mut(idx)[k] = rec[2 * d + k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Io(e.to_string()))?;
            }
            seen[idx] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Io("grid function file is missing nodes".into()));
        }
        Ok(gf)
    }
}

/// Growth weight `ρ ≥ 1` of the weighted sup-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightFunction {
    /// `ρ ≡ 1`.
    Unit,
    /// `ρ(x) = e^{α|x|}`.
    Exponential { alpha: f64 },
    /// `ρ(x) = (1 + α|x|)^β`.
    Polynomial { alpha: f64, beta: f64 },
}

impl WeightFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        match *self {
            WeightFunction::Unit => 1.0,
            WeightFunction::Exponential { alpha } => (alpha * r).exp(),
            WeightFunction::Polynomial { alpha, beta } => (1.0 + alpha * r).powf(beta),
        }
    }
}

/// `max_z ‖φ(z)‖ / ρ(z)` over the nodes.
pub fn weighted_norm(gf: &GridFunction, rho: &WeightFunction) -> f64 {
    let grid = gf.grid();
    (0..grid.len())
        .map(|i| norm(gf.value(i)) / rho.eval(&grid.node(i)))
        .fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear_1d() -> GridFunction {
        let g = Grid::new(1, 0.2, 10).unwrap();
        GridFunction::from_fn(&g, |z, out| out[0] = z[0])
    }

    #[test]
    fn grid_layout() {
        let g = Grid::new(2, 0.5, 2).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g.multi_index(0), vec![-2, -2]);
        assert_eq!(g.multi_index(1), vec![-2, -1]);
        assert_eq!(g.node(g.origin()), vec![0.0, 0.0]);
        for idx in 0..g.len() {
            assert_eq!(g.linear_index(&g.multi_index(idx)), Some(idx));
        }
        assert_eq!(g.linear_index(&[3, 0]), None);
        assert_eq!(g.interior_nodes(1).unwrap().len(), 9);
        assert_eq!(g.interior_nodes(2).unwrap(), vec![g.origin()]);
        assert!(g.interior_nodes(3).is_err());
    }

    #[test]
    fn hat_values() {
        let g = Grid::new(1, 0.2, 10).unwrap();
        let z = g.origin();
        assert_eq!(g.hat_basis(z, &[0.0]), 1.0);
        assert!((g.hat_basis(z, &[0.1]) - 0.5).abs() < 1e-15);
        assert_eq!(g.hat_basis(z, &[0.2]), 0.0);
        assert_eq!(g.hat_basis(z, &[-0.35]), 0.0);
    }

    #[test]
    fn projection() {
        let g = Grid::new(1, 0.2, 10).unwrap();
        assert_eq!(g.project_to_box(&[0.3]), vec![0.3]);
        assert_eq!(g.project_to_box(&[3.0]), vec![2.0]);
        let g = Grid::new(2, 0.5, 4).unwrap();
        assert_eq!(g.project_to_box(&[3.0, -5.0]), vec![2.0, -2.0]);
    }

    #[test]
    fn interpolation_examples() {
        let gf = linear_1d();
        assert!((gf.interpolate(&[0.13])[0] - 0.13).abs() < 1e-15);
        assert_eq!(gf.interpolate(&[4.0])[0], 2.0);
        assert_eq!(gf.interpolate(&[-7.0])[0], -2.0);
        for idx in 0..gf.grid().len() {
            let z = gf.grid().node(idx);
            assert_eq!(gf.interpolate(&z)[0], gf.value(idx)[0]);
        }
    }

    #[test]
    fn interpolation_exact_at_nodes_2d() {
        let g = Grid::new(2, 0.4, 5).unwrap();
        let gf = GridFunction::from_fn(&g, |z, out| {
            out[0] = (z[0] * 3.1).sin() + z[1];
            out[1] = z[0] * z[1];
        });
        for idx in 0..g.len() {
            let z = g.node(idx);
            assert_eq!(gf.interpolate(&z), gf.value(idx).to_vec());
        }
    }

    #[test]
    fn single_node_grid() {
        let g = Grid::new(2, 1.0, 0).unwrap();
        let gf = GridFunction::from_values(&g, vec![1.5, -2.0]).unwrap();
        assert_eq!(gf.interpolate(&[0.3, 9.0]), vec![1.5, -2.0]);
    }

    #[test]
    fn weighted_norm_examples() {
        let g = Grid::new(2, 0.5, 3).unwrap();
        let rho = WeightFunction::Exponential { alpha: 0.7 };
        assert_eq!(weighted_norm(&GridFunction::zeros(&g), &rho), 0.0);
        let gf = GridFunction::from_fn(&g, |z, out| {
            out[0] = rho.eval(z);
            out[1] = 0.0;
        });
        assert!((weighted_norm(&gf, &rho) - 1.0).abs() < 1e-14);
        let gf = GridFunction::from_fn(&g, |z, out| {
            out[0] = z[0];
            out[1] = z[1];
        });
        assert!((weighted_norm(&gf, &WeightFunction::Unit) - gf.max_norm()).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::new(2, 0.3, 2).unwrap();
        let gf = GridFunction::from_fn(&g, |z, out| {
            out[0] = z[0].exp() / 3.0;
            out[1] = -z[1] * std::f64::consts::PI;
        });
        let mut buf = Vec::new();
        gf.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i1,i2,x1,x2,v1,v2\n-2,-2,"));
        let back = GridFunction::read_csv(&g, buf.as_slice()).unwrap();
        assert_eq!(back, gf);
    }

    /// `v(x) = -2x e^{-x²}` on a fixed box; the sup error is probed on a fine
    /// point set in the box.
    fn interp_error(n_tilde: usize, delta: f64) -> f64 {
        let g = Grid::new(1, delta, n_tilde).unwrap();
        let v = |x: f64| -2.0 * x * (-x * x).exp();
        let gf = GridFunction::from_fn(&g, |z, out| out[0] = v(z[0]));
        let h = g.half_width();
        (0..=20_000)
            .map(|k| -h + 2.0 * h * k as f64 / 20_000.0)
            .map(|x| (gf.interpolate(&[x])[0] - v(x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn second_order_accuracy() {
        // box [-2, 2]
        let e1 = interp_error(10, 0.2);
        let e2 = interp_error(20, 0.1);
        let e3 = interp_error(40, 0.05);
        for ratio in [e1 / e2, e2 / e3] {
            assert!((3.4..=4.6).contains(&ratio), "ratio {ratio} ({e1}, {e2}, {e3})");
        }
    }

    fn arb_grid_fn() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..=3).prop_flat_map(|d| {
            let n = 5usize.pow(d as u32) * d;
            (
                Just(d),
                proptest::collection::vec(-3.0f64..3.0, n),
                proptest::collection::vec(-3.0f64..3.0, n),
                proptest::collection::vec(-1.5f64..1.5, d),
            )
        })
    }

    proptest! {
        #[test]
        fn partition_of_unity(d in 1usize..=3, x in proptest::collection::vec(-0.9f64..0.9, 3)) {
            let g = Grid::new(d, 0.45, 2).unwrap();
            let x = &x[..d];
            let total: f64 = (0..g.len()).map(|i| g.hat_basis(i, x)).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn interpolation_matches_basis_sum(d in 1usize..=3, x in proptest::collection::vec(-1.2f64..1.2, 3), seed in 0u64..1000) {
            let g = Grid::new(d, 0.5, 2).unwrap();
            let gf = GridFunction::from_fn(&g, |z, out| {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = ((seed as f64 + 1.0) * z.iter().sum::<f64>() + k as f64).sin();
                }
            });
            let x = &x[..d];
            let xp = g.project_to_box(x);
            let p = gf.interpolate(x);
            for k in 0..d {
                let direct: f64 = (0..g.len()).map(|i| g.hat_basis(i, &xp) * gf.value(i)[k]).sum();
                prop_assert!((direct - p[k]).abs() <= 1e-12);
            }
        }

        #[test]
        fn interpolation_is_a_contraction((d, a, b, x) in arb_grid_fn()) {
            let g = Grid::new(d, 0.5, 2).unwrap();
            let fa = GridFunction::from_values(&g, a).unwrap();
            let fb = GridFunction::from_values(&g, b).unwrap();
            let pa = fa.interpolate(&x);
            let pb = fb.interpolate(&x);
            let diff: Vec<f64> = pa.iter().zip(&pb).map(|(u, v)| u - v).collect();
            prop_assert!(norm(&diff) <= fa.max_distance(&fb) * (1.0 + 1e-12));
        }

        #[test]
        fn weighted_interpolation_bound((d, a, _b, x) in arb_grid_fn(), alpha in 0.1f64..2.0) {
            let g = Grid::new(d, 0.5, 2).unwrap();
            let f = GridFunction::from_values(&g, a).unwrap();
            let rho = WeightFunction::Polynomial { alpha, beta: 2.0 };
            let rho_grid = GridFunction::from_fn(&g, |z, out| {
                out.iter_mut().for_each(|o| *o = 0.0);
                out[0] = rho.eval(z);
            });
            let p_rho = rho_grid.interpolate(&x)[0];
            prop_assert!(norm(&f.interpolate(&x)) <= p_rho * weighted_norm(&f, &rho) * (1.0 + 1e-12));
        }
    }
}

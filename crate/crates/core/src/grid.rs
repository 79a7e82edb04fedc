//! Cell-centred densities on regular grids over box domains (d ≤ 2).

use crate::error::{Error, Result};
use crate::geometry::{Domain, Shape};
use crate::kernel::KernelSpec;

/// `ρ` sampled at cell centres; axis 0 varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    domain: Domain,
    lower: Vec<f64>,
    cells: Vec<usize>,
    dx: Vec<f64>,
    values: Vec<f64>,
    t: f64,
}

impl DensityGrid {
    /// Zero density on `cells[a]` cells per axis of a box domain.
    pub fn zeros(domain: &Domain, cells: &[usize]) -> Result<Self> {
        let (lower, upper) = match domain.shape() {
            Shape::Box { lower, upper } => (lower.clone(), upper.clone()),
            Shape::Ball { .. } => {
                return Err(Error::Unsupported("density grids need a box domain".into()))
            }
        };
        let d = lower.len();
        if d > 2 {
            return Err(Error::Unsupported(format!("density grids support d <= 2 (d = {d})")));
        }
        if cells.len() != d || cells.iter().any(|&c| c < 2) {
            return Err(Error::BadInput(format!(
                "need at least 2 cells on each of {d} axes, got {cells:?}"
            )));
        }
        let dx = (0..d).map(|a| (upper[a] - lower[a]) / cells[a] as f64).collect();
        let n = cells.iter().product();
        Ok(Self {
            domain: domain.clone(),
            lower,
            cells: cells.to_vec(),
            dx,
            values: vec![0.0; n],
            t: 0.0,
        })
    }

    /// Cells of width close to `dx` on every axis.
    pub fn with_spacing(domain: &Domain, dx: f64) -> Result<Self> {
        let (lower, upper) = domain.bounds();
        let cells: Vec<usize> = lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| ((u - l) / dx).round().max(2.0) as usize)
            .collect();
        Self::zeros(domain, &cells)
    }

    /// Samples `g` at cell centres.
    pub fn from_fn<G: FnMut(&[f64]) -> f64>(domain: &Domain, cells: &[usize], mut g: G) -> Result<Self> {
        let mut grid = Self::zeros(domain, cells)?;
        let mut x = vec![0.0; grid.dim()];
        for i in 0..grid.len() {
            grid.center_into(i, &mut x);
            grid.values[i] = g(&x);
        }
        Ok(grid)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx.iter().product()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    /// Per-axis index of flat cell `i`.
    pub fn unflatten(&self, i: usize) -> [usize; 2] {
        match self.dim() {
            1 => [i, 0],
            _ => [i % self.cells[0], i / self.cells[0]],
        }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        match self.dim() {
            1 => idx[0],
            _ => idx[0] + self.cells[0] * idx[1],
        }
    }

    pub fn center_into(&self, i: usize, x: &mut [f64]) {
        let idx = self.unflatten(i);
        for a in 0..self.dim() {
            x[a] = self.lower[a] + self.dx[a] * (idx[a] as f64 + 0.5);
        }
    }

    pub fn center(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.center_into(i, &mut x);
        x
    }

    /// `Σ ρ · cell volume`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rescales to unit mass.
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidDensity(format!("cannot normalize mass {m}")));
        }
        for v in &mut self.values {
            *v /= m;
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &DensityGrid) -> bool {
        self.cells == other.cells
            && self
                .lower
                .iter()
                .zip(&other.lower)
                .chain(self.dx.iter().zip(&other.dx))
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }

    pub fn ensure_same_grid(&self, other: &DensityGrid) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "cells {:?} vs {:?}, spacing {:?} vs {:?}",
                self.cells, other.cells, self.dx, other.dx
            )))
        }
    }

    /// Rejects negative, non-finite or non-unit-mass grids.
    pub fn check_density(&self, mass_tol: f64) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDensity(format!(
                "cell {i} has value {}",
                self.values[i]
            )));
        }
        let m = self.mass();
        if (m - 1.0).abs() > mass_tol {
            return Err(Error::InvalidDensity(format!("mass {m} differs from 1")));
        }
        Ok(())
    }

    /// Adds `scale · Σ_i K^δ(x_c - w_i)` at every cell centre `x_c`, visiting
    /// only cells inside each bump's support. `weights` holds `dim`-vectors.
    pub fn splat_bumps(&mut self, weights: &[f64], kernel: &KernelSpec, scale: f64) {
        let d = self.dim();
        let rad = kernel.radius();
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        for w in weights.chunks_exact(d) {
            let mut empty = false;
            for a in 0..d {
                let first = ((w[a] - rad - self.lower[a]) / self.dx[a] - 0.5).ceil();
                let last = ((w[a] + rad - self.lower[a]) / self.dx[a] - 0.5).floor();
                let first = first.max(0.0);
                let last = last.min((self.cells[a] - 1) as f64);
                if last < first {
                    empty = true;
                    break;
                }
                lo[a] = first as usize;
                hi[a] = last as usize;
            }
            if empty {
                continue;
            }
            let (j_lo, j_hi) = if d == 2 { (lo[1], hi[1]) } else { (0, 0) };
            for j in j_lo..=j_hi {
                let y1 = if d == 2 {
                    self.lower[1] + self.dx[1] * (j as f64 + 0.5) - w[1]
                } else {
                    0.0
                };
                for i in lo[0]..=hi[0] {
                    let y0 = self.lower[0] + self.dx[0] * (i as f64 + 0.5) - w[0];
                    let k = kernel.eval_sq(y0 * y0 + y1 * y1);
                    if k != 0.0 {
                        let c = self.flatten([i, j]);
                        self.values[c] += scale * k;
                    }
                }
            }
        }
    }

    /// Linear interpolation of the cell values at `x`, clamped at the outer
    /// half cells.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        interpolate_cells(&self.lower, &self.cells, &self.dx, &self.values, 1, 0, x)
    }
}

/// Bilinear (or linear) interpolation of component `comp` of a field with
/// `stride` interleaved components per cell.
pub(crate) fn interpolate_cells(
    lower: &[f64],
    cells: &[usize],
    dx: &[f64],
    values: &[f64],
    stride: usize,
    comp: usize,
    x: &[f64],
) -> f64 {
    let locate = |a: usize| -> (usize, f64) {
        let u = ((x[a] - lower[a]) / dx[a] - 0.5).clamp(0.0, (cells[a] - 1) as f64);
        let i = (u.floor() as usize).min(cells[a] - 2);
        (i, u - i as f64)
    };
    match cells.len() {
        1 => {
            let (i, t) = locate(0);
            (1.0 - t) * values[i * stride + comp] + t * values[(i + 1) * stride + comp]
        }
        _ => {
            let (i, s) = locate(0);
            let (j, t) = locate(1);
            let at = |ii: usize, jj: usize| values[(ii + cells[0] * jj) * stride + comp];
            (1.0 - s) * (1.0 - t) * at(i, j)
                + s * (1.0 - t) * at(i + 1, j)
                + (1.0 - s) * t * at(i, j + 1)
                + s * t * at(i + 1, j + 1)
        }
    }
}

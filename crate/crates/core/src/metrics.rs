//! Distances between particle clouds and grid densities.
//!
//! One-dimensional Wasserstein distances are computed exactly from
//! piecewise-linear quantile functions.

use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::kernel::KernelSpec;

/// Uniformly weighted point cloud, `N` points of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    /// `points` holds `N` consecutive `dim`-vectors.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::BadInput(format!(
                "{} coordinates do not form points of dimension {dim}",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadInput("non-finite point coordinate".into()));
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Each point carries mass `1/N`.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }
}

/// A quantile function `Q: [0, 1] → ℝ` that is linear on each piece.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFn {
    pieces: Vec<Piece>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    u0: f64,
    u1: f64,
    x0: f64,
    x1: f64,
}

impl QuantileFn {
    fn from_pieces(mut pieces: Vec<Piece>) -> Self {
        // pin the ends so that merged sweeps cover [0, 1] exactly
        if let Some(first) = pieces.first_mut() {
            first.u0 = 0.0;
        }
        if let Some(last) = pieces.last_mut() {
            last.u1 = 1.0;
        }
        Self { pieces }
    }

    /// Evaluates `Q(u)` (right-continuous at jumps).
    pub fn eval(&self, u: f64) -> f64 {
        let i = self
            .pieces
            .partition_point(|p| p.u1 <= u)
            .min(self.pieces.len() - 1);
        self.pieces[i].at(u)
    }
}

impl Piece {
    fn slope(&self) -> f64 {
        if self.u1 > self.u0 {
            (self.x1 - self.x0) / (self.u1 - self.u0)
        } else {
            0.0
        }
    }

    #[inline]
    fn at(&self, u: f64) -> f64 {
        if self.u1 > self.u0 {
            self.x0 + (self.x1 - self.x0) * (u - self.u0) / (self.u1 - self.u0)
        } else {
            self.x0
        }
    }
}

/// Measures on the line that admit a quantile function.
pub trait Quantile {
    fn quantile(&self) -> Result<QuantileFn>;
}

impl Quantile for EmpiricalMeasure {
    fn quantile(&self) -> Result<QuantileFn> {
        if self.dim != 1 {
            return Err(Error::Unsupported(format!(
                "quantile functions need d = 1 (d = {})",
                self.dim
            )));
        }
        let mut xs = self.points.clone();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        Ok(QuantileFn::from_pieces(
            xs.iter()
                .enumerate()
                .map(|(i, &x)| Piece {
                    u0: i as f64 / n,
                    u1: (i + 1) as f64 / n,
                    x0: x,
                    x1: x,
                })
                .collect(),
        ))
    }
}

impl Quantile for DensityGrid {
    /// Each cell is uniform, so `Q` is linear across the cell's mass.
    fn quantile(&self) -> Result<QuantileFn> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(format!(
                "quantile functions need d = 1 (d = {})",
                self.dim()
            )));
        }
        if self.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDensity("negative or non-finite cell".into()));
        }
        let total = self.mass();
        if !(total > 0.0) {
            return Err(Error::InvalidDensity("zero mass".into()));
        }
        let dx = self.dx()[0];
        let lo = self.lower()[0];
        let mut u = 0.0;
        let mut pieces = Vec::new();
        for (i, &v) in self.values().iter().enumerate() {
            if v > 0.0 {
                let m = v * dx / total;
                pieces.push(Piece {
                    u0: u,
                    u1: u + m,
                    x0: lo + dx * i as f64,
                    x1: lo + dx * (i + 1) as f64,
                });
                u += m;
            }
        }
        Ok(QuantileFn::from_pieces(pieces))
    }
}

impl Quantile for QuantileFn {
    fn quantile(&self) -> Result<QuantileFn> {
        Ok(self.clone())
    }
}

/// A sub-interval `[u0, u1]` of `[0, 1]` on which both quantile functions
/// are linear, with their values at the ends.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Overlap {
    pub u0: f64,
    pub u1: f64,
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    /// Slopes `Q'` of the two pieces.
    pub sa: f64,
    pub sb: f64,
}

pub(crate) fn overlaps(a: &QuantileFn, b: &QuantileFn) -> Vec<Overlap> {
    let mut out = Vec::with_capacity(a.pieces.len() + b.pieces.len());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    while i < a.pieces.len() && j < b.pieces.len() {
        let (pa, pb) = (a.pieces[i], b.pieces[j]);
        let v = pa.u1.min(pb.u1);
        if v > u {
            out.push(Overlap {
                u0: u,
                u1: v,
                a0: pa.at(u),
                a1: pa.at(v),
                b0: pb.at(u),
                b1: pb.at(v),
                sa: pa.slope(),
                sb: pb.slope(),
            });
            u = v;
        }
        if pa.u1 <= v {
            i += 1;
        }
        if pb.u1 <= v {
            j += 1;
        }
    }
    out
}

/// `∫ |g|^p` over an interval of length `h` for `g` linear from `g0` to `g1`.
fn linear_abs_power(h: f64, g0: f64, g1: f64, p: u32) -> f64 {
    match p {
        1 => {
            if g0 * g1 >= 0.0 {
                0.5 * h * (g0.abs() + g1.abs())
            } else {
                0.5 * h * (g0 * g0 + g1 * g1) / (g0.abs() + g1.abs())
            }
        }
        _ => h * (g0 * g0 + g0 * g1 + g1 * g1) / 3.0,
    }
}

/// `W_p(a, b)` for `p ∈ {1, 2}` via the monotone coupling.
pub fn wasserstein_1d<A: Quantile + ?Sized, B: Quantile + ?Sized>(
    a: &A,
    b: &B,
    p: u32,
) -> Result<f64> {
    if p != 1 && p != 2 {
        return Err(Error::BadInput(format!("W_p implemented for p = 1, 2 (got {p})")));
    }
    let qa = a.quantile()?;
    let qb = b.quantile()?;
    let total: f64 = overlaps(&qa, &qb)
        .iter()
        .map(|o| linear_abs_power(o.u1 - o.u0, o.a0 - o.b0, o.a1 - o.b1, p))
        .sum();
    Ok(if p == 1 { total } else { total.sqrt() })
}

/// `‖a - b‖_{L²}` with the grid's cell volume.
pub fn l2_distance(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    a.ensure_same_grid(b)?;
    let s: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((s * a.cell_volume()).sqrt())
}

/// `(1/N) Σ K^δ(x - w_i)` at the cell centres of `template`, i.e. the
/// network output `f̂` itself, smoothed with the network's own kernel.
pub fn kde_of_particles(
    particles: &EmpiricalMeasure,
    kernel: &KernelSpec,
    template: &DensityGrid,
) -> Result<DensityGrid> {
    if particles.dim() != template.dim() || kernel.dim() != template.dim() {
        return Err(Error::GridMismatch(format!(
            "particles d = {}, kernel d = {}, grid d = {}",
            particles.dim(),
            kernel.dim(),
            template.dim()
        )));
    }
    let mut out = DensityGrid::zeros(template.domain(), template.cells())?;
    out.set_time(template.time());
    out.splat_bumps(particles.points(), kernel, particles.weight());
    Ok(out)
}

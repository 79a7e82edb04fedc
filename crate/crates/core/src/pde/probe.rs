//! Convexity of the risk along one-dimensional Wasserstein geodesics.
//!
//! In 1D the geodesic between `ρ₀` and `ρ₁` is `Q_t = (1−t)Q₀ + tQ₁` in
//! quantile space. On each common linear piece `ρ_t = 1/Q_t'`, so
//! `∫ρ_t² = ∫ du / Q_t'` and `∫ f ρ_t = ∫ f(Q_t(u)) du` are exact sums.

use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::metrics::{overlaps, Overlap, Quantile};
use crate::quadrature::GaussLegendre;
use crate::target::TargetFunction;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    /// Modulus `λ = 2ν₀α` used in the check (`α` may be negative).
    pub lambda: f64,
    pub w2_squared: f64,
    pub ts: Vec<f64>,
    pub risk: Vec<f64>,
    /// `(1−t)R(ρ₀) + tR(ρ₁) − R(ρ_t)`.
    pub gap: Vec<f64>,
    /// `(λ/2) t(1−t) W₂²`.
    pub bound: Vec<f64>,
    pub min_margin: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Evaluates `R = ν₀‖f − ρ_t‖²` at `n_points` evenly spaced `t ∈ [0, 1]`
/// and checks `gap(t) ≥ bound(t)` up to a rounding tolerance.
pub fn displacement_convexity_probe(
    target: &TargetFunction,
    rho_a: &DensityGrid,
    rho_b: &DensityGrid,
    n_points: usize,
) -> Result<ConvexityReport> {
    if rho_a.dim() != 1 || target.dim() != 1 {
        return Err(Error::Unsupported("the convexity probe is one-dimensional".into()));
    }
    rho_a.ensure_same_grid(rho_b)?;
    rho_a.check_density(1e-8)?;
    rho_b.check_density(1e-8)?;
    if n_points < 2 {
        return Err(Error::BadInput("probe needs at least two points".into()));
    }
    let alpha = match target.concavity_alpha(1e-3) {
        Ok(a) => a,
        Err(Error::NotConcave { min_eigenvalue }) => min_eigenvalue,
        Err(e) => return Err(e),
    };
    let nu0 = target.domain().nu0();
    let lambda = 2.0 * nu0 * alpha;
    let pieces = overlaps(&rho_a.quantile()?, &rho_b.quantile()?);
    let w2_squared: f64 = pieces
        .iter()
        .map(|o| {
            let (g0, g1) = (o.b0 - o.a0, o.b1 - o.a1);
            (o.u1 - o.u0) * (g0 * g0 + g0 * g1 + g1 * g1) / 3.0
        })
        .sum();
    let rule = GaussLegendre::new(8);
    let mut ts = Vec::with_capacity(n_points);
    let mut risk = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let t = k as f64 / (n_points - 1) as f64;
        ts.push(t);
        risk.push(geodesic_risk(target, &pieces, t, nu0, &rule)?);
    }
    let (r0, r1) = (risk[0], risk[n_points - 1]);
    let mut gap = Vec::with_capacity(n_points);
    let mut bound = Vec::with_capacity(n_points);
    let mut min_margin = f64::INFINITY;
    for (k, &t) in ts.iter().enumerate() {
        let g = (1.0 - t) * r0 + t * r1 - risk[k];
        let b = 0.5 * lambda * t * (1.0 - t) * w2_squared;
        min_margin = min_margin.min(g - b);
        gap.push(g);
        bound.push(b);
    }
    let tolerance = 1e-10 * r0.abs().max(r1.abs()).max(1.0);
    Ok(ConvexityReport {
        lambda,
        w2_squared,
        ts,
        risk,
        gap,
        bound,
        min_margin,
        tolerance,
        holds: min_margin >= -tolerance,
    })
}

fn geodesic_risk(target: &TargetFunction, pieces: &[Overlap], t: f64, nu0: f64, rule: &GaussLegendre) -> Result<f64> {
    let mut sq = 0.0;
    let mut cross = 0.0;
    for o in pieces {
        let q0 = (1.0 - t) * o.a0 + t * o.b0;
        let q1 = (1.0 - t) * o.a1 + t * o.b1;
        let du = o.u1 - o.u0;
        let slope = (1.0 - t) * o.sa + t * o.sb;
        if !(slope > 0.0) {
            return Err(Error::InvalidDensity(
                "geodesic carries an atom; inputs must be densities".into(),
            ));
        }
        sq += du / slope;
        cross += rule.integrate(0.0, 1.0, |s| target.value(&[q0 + s * (q1 - q0)])) * du;
    }
    Ok(nu0 * (target.sq_norm() - 2.0 * cross + sq))
}

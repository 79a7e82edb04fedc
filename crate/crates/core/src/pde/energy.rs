//! Risk, entropy and free energy of grid densities.

use super::PdeVariant;
use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::kernel::KernelSpec;
use crate::target::TargetFunction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    /// `F = R/2 − τS`.
    pub free_energy: f64,
    pub risk: f64,
    pub entropy: f64,
    /// `S ≤ log|Ω|` (up to `1e-9`).
    pub entropy_bound_ok: bool,
}

/// Cells below this density contribute nothing to `−ρ log ρ`.
const ENTROPY_CUTOFF: f64 = 1e-30;

/// `S(ρ) = −Σ ρ log ρ · vol`.
pub fn entropy(grid: &DensityGrid) -> f64 {
    -grid
        .values()
        .iter()
        .filter(|&&r| r >= ENTROPY_CUTOFF)
        .map(|&r| r * r.ln())
        .sum::<f64>()
        * grid.cell_volume()
}

/// Risk of a grid density against `f`.
///
/// For `δ = 0` this is `ν₀ Σ (f − ρ)² vol` at cell centres. For `δ > 0` it is
/// `ν₀ ‖f − K^δ*μ‖²` for the atomic measure `μ = Σ ρ_c vol δ_{x_c}`, computed
/// by midpoint quadrature on a grid refined to resolve the bumps.
pub fn risk_of_density(
    grid: &DensityGrid,
    target: &TargetFunction,
    kernel: Option<&KernelSpec>,
    variant: PdeVariant,
) -> Result<f64> {
    if grid.domain() != target.domain() {
        return Err(Error::GridMismatch("grid and target domains differ".into()));
    }
    let nu0 = target.domain().nu0();
    match variant {
        PdeVariant::LimitDelta0 => {
            let mut x = vec![0.0; grid.dim()];
            let mut acc = 0.0;
            for (c, r) in grid.values().iter().enumerate() {
                grid.center_into(c, &mut x);
                let e = target.value(&x) - r;
                acc += e * e;
            }
            Ok(nu0 * acc * grid.cell_volume())
        }
        PdeVariant::ConvolutionDelta { delta } => {
            let kernel = kernel.ok_or_else(|| Error::InvalidConfig("δ-risk needs a kernel".into()))?;
            if (kernel.delta() - delta).abs() > 1e-12 * delta {
                return Err(Error::InvalidConfig("kernel width differs from delta".into()));
            }
            let h = grid.dx().iter().copied().fold(f64::INFINITY, f64::min).min(delta / 40.0);
            let mut fine = DensityGrid::with_spacing(grid.domain(), h)?;
            let vol = grid.cell_volume();
            let mut x = vec![0.0; grid.dim()];
            for (c, &r) in grid.values().iter().enumerate() {
                if r != 0.0 {
                    grid.center_into(c, &mut x);
                    fine.splat_bumps(&x, kernel, r * vol);
                }
            }
            let mut acc = 0.0;
            for (c, fhat) in fine.values().iter().enumerate() {
                fine.center_into(c, &mut x);
                let e = target.value(&x) - fhat;
                acc += e * e;
            }
            Ok(nu0 * acc * fine.cell_volume())
        }
    }
}

/// `(F, R, S)` for a grid density at temperature `tau`.
pub fn free_energy(
    grid: &DensityGrid,
    tau: f64,
    target: &TargetFunction,
    kernel: Option<&KernelSpec>,
    variant: PdeVariant,
) -> Result<Energy> {
    let risk = risk_of_density(grid, target, kernel, variant)?;
    Ok(super::free_energy_from(risk, tau, grid))
}

/// `R^δ(f) = ν₀ ‖f − K^δ*f‖²`, the residual risk of the target itself,
/// by midpoint quadrature with `nodes` points per axis.
pub fn mollified_target_risk(target: &TargetFunction, kernel: &KernelSpec, nodes: usize) -> Result<f64> {
    let domain = target.domain();
    let grid = DensityGrid::zeros(domain, &vec![nodes; domain.dim()])?;
    let mut x = vec![0.0; grid.dim()];
    let mut acc = 0.0;
    for c in 0..grid.len() {
        grid.center_into(c, &mut x);
        let smooth = kernel.convolve(|y| target.value(y), &x, Some(domain))?;
        let e = target.value(&x) - smooth;
        acc += e * e;
    }
    Ok(domain.nu0() * acc * grid.cell_volume())
}

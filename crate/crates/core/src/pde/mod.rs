//! Conservative finite-volume solvers for the mean-field flows in d ≤ 2.
//!
//! Both flows are written as `∂tρ = ∇·(ρ∇φ) + τΔρ` with a cell potential
//! `φ`: for the `δ = 0` limit `φ = ν₀(ρ − f)`, for `δ > 0`
//! `φ = Ψ = −ν₀K^δ*f + ν₀K^δ*K^δ*ρ`. Face fluxes use the upwind density for
//! the drift and central differences for diffusion; boundary faces carry no
//! flux, so mass is conserved to rounding.

mod energy;
mod probe;

pub use energy::{entropy, free_energy, mollified_target_risk, risk_of_density, Energy};
pub use probe::{displacement_convexity_probe, ConvexityReport};

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::grid::{interpolate_cells, DensityGrid};
use crate::kernel::KernelSpec;
use crate::target::TargetFunction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PdeVariant {
    /// The viscous porous-medium equation (`δ = 0`).
    LimitDelta0,
    /// The convolution flow at width `δ`.
    ConvolutionDelta { delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeConfig {
    pub dt: f64,
    pub cells: Vec<usize>,
    pub tau: f64,
    pub horizon: f64,
    pub variant: PdeVariant,
}

impl PdeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("pde dt must be > 0 (got {})", self.dt));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("pde tau must be >= 0 (got {})", self.tau));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("pde horizon must be >= 0 (got {})", self.horizon));
        }
        if let PdeVariant::ConvolutionDelta { delta } = self.variant {
            if !(delta > 0.0) {
                return bad(format!("convolution PDE needs delta > 0 (got {delta})"));
            }
        }
        Ok(())
    }

    /// Number of time steps `round(T / dt)`.
    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }
}

/// Initial law on the grid, restricted to a support region and normalised
/// to unit discrete mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDensity {
    /// `N(0, σ²I)` truncated to the support.
    TruncatedGaussian { sigma: f64 },
    Uniform,
}

pub fn initial_density(
    domain: &Domain,
    cells: &[usize],
    init: InitialDensity,
    support: &Domain,
) -> Result<DensityGrid> {
    let mut g = DensityGrid::from_fn(domain, cells, |x| {
        if !support.contains(x) {
            return 0.0;
        }
        match init {
            InitialDensity::TruncatedGaussian { sigma } => {
                (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma * sigma)).exp()
            }
            InitialDensity::Uniform => 1.0,
        }
    })?;
    g.normalize()?;
    Ok(g)
}

/// Pair-potential weights `U(o·Δx)·vol` on the offsets `|o_a| ≤ m_a`.
#[derive(Debug, Clone)]
struct Toeplitz {
    m: [usize; 2],
    weights: Vec<f64>,
}

impl Toeplitz {
    fn new(kernel: &KernelSpec, nu0: f64, dx: &[f64], with_gradient: bool) -> Result<(Self, Option<Vec<f64>>)> {
        let d = dx.len();
        let reach = 2.0 * kernel.radius();
        let mut m = [0usize; 2];
        for a in 0..d {
            m[a] = (reach / dx[a]).ceil() as usize;
        }
        let vol: f64 = dx.iter().product();
        let width = [2 * m[0] + 1, if d == 2 { 2 * m[1] + 1 } else { 1 }];
        let mut weights = Vec::with_capacity(width[0] * width[1]);
        let mut grads = Vec::new();
        for j in 0..width[1] {
            for i in 0..width[0] {
                let mut off = vec![(i as f64 - m[0] as f64) * dx[0]];
                if d == 2 {
                    off.push((j as f64 - m[1] as f64) * dx[1]);
                }
                weights.push(kernel.pair_potential(&off, nu0)? * vol);
                if with_gradient {
                    grads.extend(kernel.grad_pair_potential(&off, nu0)?.into_iter().map(|g| g * vol));
                }
            }
        }
        Ok((Self { m, weights }, with_gradient.then_some(grads)))
    }
}

/// Explicit conservative solver for one PDE run.
#[derive(Debug, Clone)]
pub struct PdeSolver {
    grid: DensityGrid,
    variant: PdeVariant,
    tau: f64,
    nu0: f64,
    sq_norm_f: f64,
    /// `f` at cell centres (limit) or `A = K^δ*f` at cell centres (δ > 0).
    field: Vec<f64>,
    active: Vec<bool>,
    pair: Option<Toeplitz>,
    step: u64,
    substeps_warned: bool,
    // scratch
    phi: Vec<f64>,
    conv: Vec<f64>,
    div: Vec<f64>,
    rate: Vec<f64>,
}

impl PdeSolver {
    /// `kernel` is required for the convolution variant and ignored otherwise.
    pub fn new(
        cfg: &PdeConfig,
        target: &TargetFunction,
        kernel: Option<&KernelSpec>,
        initial: DensityGrid,
    ) -> Result<Self> {
        cfg.validate()?;
        if initial.cells() != cfg.cells.as_slice() {
            return Err(Error::GridMismatch(format!(
                "initial grid has cells {:?}, config asks for {:?}",
                initial.cells(),
                cfg.cells
            )));
        }
        if initial.domain() != target.domain() {
            return Err(Error::GridMismatch("initial grid and target live on different domains".into()));
        }
        let domain = target.domain().clone();
        let nu0 = domain.nu0();
        let n = initial.len();
        let mut x = vec![0.0; initial.dim()];
        let (field, active, pair) = match cfg.variant {
            PdeVariant::LimitDelta0 => {
                let mut field = vec![0.0; n];
                for (c, v) in field.iter_mut().enumerate() {
                    initial.center_into(c, &mut x);
                    *v = target.value(&x);
                }
                (field, vec![true; n], None)
            }
            PdeVariant::ConvolutionDelta { delta } => {
                let kernel = kernel.ok_or_else(|| {
                    Error::InvalidConfig("convolution PDE needs a kernel".into())
                })?;
                if (kernel.delta() - delta).abs() > 1e-12 * delta {
                    return Err(Error::InvalidConfig(format!(
                        "kernel width {} differs from PDE delta {delta}",
                        kernel.delta()
                    )));
                }
                let shrunk = crate::geometry::shrink(&domain, kernel.c0(), delta)?;
                let mut field = vec![0.0; n];
                let mut active = vec![false; n];
                for c in 0..n {
                    initial.center_into(c, &mut x);
                    if shrunk.contains(&x) {
                        active[c] = true;
                        field[c] = kernel.convolve(|y| target.value(y), &x, Some(&domain))?;
                    }
                }
                if let Some(c) = (0..n).find(|&c| !active[c] && initial.values()[c] != 0.0) {
                    return Err(Error::InvalidDensity(format!(
                        "initial density is non-zero in cell {c} outside the shrunken domain"
                    )));
                }
                let (pair, _) = Toeplitz::new(kernel, nu0, initial.dx(), false)?;
                (field, active, Some(pair))
            }
        };
        let mut solver = Self {
            grid: initial,
            variant: cfg.variant,
            tau: cfg.tau,
            nu0,
            sq_norm_f: target.sq_norm(),
            field,
            active,
            pair,
            step: 0,
            substeps_warned: false,
            phi: vec![0.0; n],
            conv: vec![0.0; n],
            div: vec![0.0; n],
            rate: vec![0.0; n],
        };
        let m = solver.grid.mass();
        if (m - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidDensity(format!("initial mass {m} is not 1")));
        }
        solver.grid.check_density(1e-8)?;
        solver.refresh_potential();
        Ok(solver)
    }

    pub fn grid(&self) -> &DensityGrid {
        &self.grid
    }

    pub fn into_grid(self) -> DensityGrid {
        self.grid
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn variant(&self) -> PdeVariant {
        self.variant
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Cell potential `φ` for the current density.
    pub fn potential(&self) -> &[f64] {
        &self.phi
    }

    fn refresh_potential(&mut self) {
        let rho = self.grid.values();
        match self.variant {
            PdeVariant::LimitDelta0 => {
                for c in 0..rho.len() {
                    self.phi[c] = self.nu0 * (rho[c] - self.field[c]);
                }
            }
            PdeVariant::ConvolutionDelta { .. } => {
                let pair = self.pair.as_ref().expect("pair table");
                convolve_toeplitz(&self.grid, pair, &self.active, rho, &mut self.conv);
                for c in 0..rho.len() {
                    self.phi[c] = if self.active[c] {
                        self.conv[c] - self.nu0 * self.field[c]
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    /// Discrete risk. For `δ = 0` it is `ν₀ Σ (f − ρ)² vol`; for `δ > 0` it
    /// is the exact risk `ν₀‖f − K^δ*μ‖²` of the atomic measure
    /// `μ = Σ ρ_c vol δ_{x_c}`, i.e. `ν₀‖f‖² − 2ν₀ Σ ρA vol + Σ ρ (U*ρ) vol`.
    pub fn risk(&self) -> f64 {
        let rho = self.grid.values();
        let vol = self.grid.cell_volume();
        match self.variant {
            PdeVariant::LimitDelta0 => {
                self.nu0
                    * rho
                        .iter()
                        .zip(&self.field)
                        .map(|(r, f)| (f - r) * (f - r))
                        .sum::<f64>()
                    * vol
            }
            PdeVariant::ConvolutionDelta { .. } => {
                let mut cross = 0.0;
                let mut quad = 0.0;
                for c in 0..rho.len() {
                    if self.active[c] {
                        cross += rho[c] * self.field[c];
                        quad += rho[c] * self.conv[c];
                    }
                }
                self.nu0 * self.sq_norm_f - 2.0 * self.nu0 * cross * vol + quad * vol
            }
        }
    }

    pub fn risk_normalized(&self) -> f64 {
        self.risk() / self.sq_norm_f
    }

    pub fn energy(&self) -> Energy {
        free_energy_from(self.risk(), self.tau, &self.grid)
    }

    /// Advances by `dt`, halving the internal step while the explicit update
    /// could drive a cell negative.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let mut remaining = dt;
        let mut h = dt;
        while remaining > 0.0 {
            let rate = self.assemble_divergence();
            while h * rate > 0.5 {
                h *= 0.5;
                if !self.substeps_warned {
                    warn!(
                        "explicit step {dt:e} exceeds the positivity bound (rate {rate:e}); halving to {h:e}"
                    );
                    self.substeps_warned = true;
                }
            }
            let h_now = h.min(remaining);
            let values = self.grid.values_mut();
            for (v, dv) in values.iter_mut().zip(&self.div) {
                *v -= h_now * dv;
            }
            if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| **v < -1e-12 || !v.is_finite()) {
                return Err(Error::SolverInstability {
                    step: self.step,
                    cell,
                    value,
                });
            }
            remaining -= h_now;
            if remaining < 1e-12 * dt {
                remaining = 0.0;
            }
            self.refresh_potential();
        }
        self.step += 1;
        let t = self.grid.time() + dt;
        self.grid.set_time(t);
        Ok(())
    }

    /// Fills `div` with `∇·F` per cell and returns the largest per-cell rate
    /// (outgoing transport speeds over `Δx` plus diffusivities over `Δx²`);
    /// `dt · rate ≤ 1/2` keeps the update positive and stable.
    fn assemble_divergence(&mut self) -> f64 {
        let d = self.grid.dim();
        let cells = [self.grid.cells()[0], if d == 2 { self.grid.cells()[1] } else { 1 }];
        let dx = [self.grid.dx()[0], if d == 2 { self.grid.dx()[1] } else { 1.0 }];
        let rho = self.grid.values();
        self.div.iter_mut().for_each(|v| *v = 0.0);
        let limit = matches!(self.variant, PdeVariant::LimitDelta0);
        let rate = &mut self.rate;
        rate.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..d {
            let stride = if a == 0 { 1 } else { cells[0] };
            let h = dx[a];
            for j in 0..cells[1] {
                for i in 0..cells[0] {
                    let idx = [i, j];
                    if idx[a] + 1 >= cells[a] {
                        continue;
                    }
                    let c = i + cells[0] * j;
                    let e = c + stride;
                    if !(self.active[c] && self.active[e]) {
                        continue;
                    }
                    let v = -(self.phi[e] - self.phi[c]) / h;
                    let upwind = if v > 0.0 { rho[c] } else { rho[e] };
                    let flux = v * upwind - self.tau * (rho[e] - rho[c]) / h;
                    self.div[c] += flux / h;
                    self.div[e] -= flux / h;
                    if v > 0.0 {
                        rate[c] += v / h;
                    } else {
                        rate[e] -= v / h;
                    }
                    // explicit diffusion limit; for δ = 0 the drift carries
                    // the nonlinear diffusivity ν₀ρ
                    let mut diff = self.tau / (h * h);
                    if limit {
                        diff += self.nu0 * rho[c].max(rho[e]) / (h * h);
                    }
                    rate[c] += diff;
                    rate[e] += diff;
                }
            }
        }
        rate.iter().copied().fold(0.0, f64::max)
    }

    /// `∇Ψ` at the cell centres for the convolution variant, from the exact
    /// gradients of `K^δ*f` and of the pair potential (interleaved, `d` per
    /// cell).
    pub fn psi_gradient(&self, kernel: &KernelSpec, target: &TargetFunction) -> Result<Vec<f64>> {
        let PdeVariant::ConvolutionDelta { .. } = self.variant else {
            return Err(Error::Unsupported("∇Ψ is defined for the convolution PDE".into()));
        };
        let field = DriftField::static_part(&self.grid, kernel, target)?;
        let (pair, grads) = Toeplitz::new(kernel, self.nu0, self.grid.dx(), true)?;
        Ok(pair_gradient(&self.grid, &pair, grads.as_deref().unwrap_or(&[]), &field))
    }
}

/// `out_c = Σ_o U(o Δx) vol ρ_{c+o}` over active cells.
fn convolve_toeplitz(grid: &DensityGrid, pair: &Toeplitz, active: &[bool], rho: &[f64], out: &mut [f64]) {
    let d = grid.dim();
    let n0 = grid.cells()[0] as isize;
    let n1 = if d == 2 { grid.cells()[1] as isize } else { 1 };
    let m0 = pair.m[0] as isize;
    let m1 = if d == 2 { pair.m[1] as isize } else { 0 };
    let w0 = 2 * m0 + 1;
    for j in 0..n1 {
        for i in 0..n0 {
            let c = (i + n0 * j) as usize;
            if !active[c] {
                out[c] = 0.0;
                continue;
            }
            let mut acc = 0.0;
            for dj in (-m1).max(-j)..=m1.min(n1 - 1 - j) {
                let row = (j + dj) * n0;
                let trow = (dj + m1) * w0;
                let lo = (-m0).max(-i);
                let hi = m0.min(n0 - 1 - i);
                for di in lo..=hi {
                    acc += pair.weights[(trow + di + m0) as usize] * rho[(row + i + di) as usize];
                }
            }
            out[c] = acc;
        }
    }
}

fn pair_gradient(grid: &DensityGrid, pair: &Toeplitz, grads: &[f64], static_part: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let n0 = grid.cells()[0] as isize;
    let n1 = if d == 2 { grid.cells()[1] as isize } else { 1 };
    let m0 = pair.m[0] as isize;
    let m1 = if d == 2 { pair.m[1] as isize } else { 0 };
    let w0 = 2 * m0 + 1;
    let rho = grid.values();
    let mut out = static_part.to_vec();
    for j in 0..n1 {
        for i in 0..n0 {
            let c = (i + n0 * j) as usize;
            for dj in (-m1).max(-j)..=m1.min(n1 - 1 - j) {
                for di in (-m0).max(-i)..=m0.min(n0 - 1 - i) {
                    let r = rho[((j + dj) * n0 + i + di) as usize];
                    if r == 0.0 {
                        continue;
                    }
                    // ∇U evaluated at x_c − x_{c+o} = −o Δx
                    let t = ((-dj + m1) * w0 + (-di + m0)) as usize;
                    for a in 0..d {
                        out[c * d + a] += grads[t * d + a] * r;
                    }
                }
            }
        }
    }
    out
}

/// Time-indexed `∇Ψ(·, ρ_t)` on a grid, for driving decoupled particles.
#[derive(Debug, Clone)]
pub struct DriftField {
    lower: Vec<f64>,
    cells: Vec<usize>,
    dx: Vec<f64>,
    times: Vec<f64>,
    fields: Vec<Vec<f64>>,
}

impl DriftField {
    /// `−ν₀ ∇(K^δ*f)` at cell centres.
    fn static_part(grid: &DensityGrid, kernel: &KernelSpec, target: &TargetFunction) -> Result<Vec<f64>> {
        let d = grid.dim();
        let nu0 = target.domain().nu0();
        let mut out = vec![0.0; grid.len() * d];
        let mut x = vec![0.0; d];
        for c in 0..grid.len() {
            grid.center_into(c, &mut x);
            let g = kernel.grad_convolve(|y| target.value(y), &x, Some(target.domain()))?;
            for a in 0..d {
                out[c * d + a] = -nu0 * g[a];
            }
        }
        Ok(out)
    }

    /// Builds the field from density snapshots of a convolution-PDE run.
    pub fn from_snapshots(snapshots: &[DensityGrid], kernel: &KernelSpec, target: &TargetFunction) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::GridMismatch("no density snapshots".into()))?;
        for s in snapshots {
            first.ensure_same_grid(s)?;
        }
        let fixed = Self::static_part(first, kernel, target)?;
        let (pair, grads) = Toeplitz::new(kernel, target.domain().nu0(), first.dx(), true)?;
        let grads = grads.unwrap_or_default();
        let fields = snapshots
            .iter()
            .map(|s| pair_gradient(s, &pair, &grads, &fixed))
            .collect();
        Ok(Self {
            lower: first.lower().to_vec(),
            cells: first.cells().to_vec(),
            dx: first.dx().to_vec(),
            times: snapshots.iter().map(DensityGrid::time).collect(),
            fields,
        })
    }

    /// A field that is identically zero (for tests of the decoupled scheme).
    pub fn zero(template: &DensityGrid, times: Vec<f64>) -> Self {
        let n = template.len() * template.dim();
        Self {
            lower: template.lower().to_vec(),
            cells: template.cells().to_vec(),
            dx: template.dx().to_vec(),
            fields: vec![vec![0.0; n]; times.len()],
            times,
        }
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Index of the snapshot to use at each step `k = 0..steps` of size
    /// `eps`: the latest snapshot time not after `kε`. Snapshot times must
    /// be integer multiples of `eps`, start at 0 and cover the horizon.
    pub fn schedule(&self, eps: f64, steps: u64) -> Result<Vec<usize>> {
        let mut marks = Vec::with_capacity(self.times.len());
        for &t in &self.times {
            let k = t / eps;
            if (k - k.round()).abs() > 1e-6 * k.max(1.0) {
                return Err(Error::GridMismatch(format!(
                    "snapshot time {t} is not a multiple of the step {eps}"
                )));
            }
            marks.push(k.round() as u64);
        }
        if marks.first() != Some(&0) {
            return Err(Error::GridMismatch("snapshots must start at t = 0".into()));
        }
        if marks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::GridMismatch("snapshot times must increase".into()));
        }
        let last = *marks.last().unwrap_or(&0);
        let gap = marks.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(1);
        if steps > 0 && last + gap < steps {
            return Err(Error::GridMismatch(format!(
                "snapshots end at t = {} but the run needs t = {}",
                last as f64 * eps,
                steps as f64 * eps
            )));
        }
        let mut out = Vec::with_capacity(steps as usize);
        let mut j = 0;
        for k in 0..steps {
            while j + 1 < marks.len() && marks[j + 1] <= k {
                j += 1;
            }
            out.push(j);
        }
        Ok(out)
    }

    /// Interpolated `∇Ψ(x, ρ_{t_j})`.
    pub fn gradient_into(&self, snapshot: usize, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for a in 0..d {
            out[a] = interpolate_cells(&self.lower, &self.cells, &self.dx, &self.fields[snapshot], d, a, x);
        }
    }
}

/// One recorded state of a PDE run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeRecord {
    pub t: f64,
    pub risk: f64,
    pub risk_normalized: f64,
    pub free_energy: f64,
    pub entropy: f64,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct PdeRun {
    pub records: Vec<PdeRecord>,
    pub snapshots: Vec<DensityGrid>,
    pub final_grid: DensityGrid,
    /// `max_k |mass_k − 1|` over every step.
    pub max_mass_error: f64,
    /// `max_k (F_{k+1} − F_k)` over every step (≤ 0 for a monotone flow).
    pub max_free_energy_increase: f64,
    pub min_density: f64,
}

/// When to record risk and when to keep full density snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    /// Number of evenly spaced risk records after `t = 0`.
    pub records: usize,
    /// Keep a snapshot every this many records (0: none).
    pub snapshot_every: usize,
}

impl Default for Recording {
    fn default() -> Self {
        Self {
            records: 100,
            snapshot_every: 0,
        }
    }
}

/// Runs the solver to `cfg.horizon`, monitoring mass and free energy at
/// every step.
pub fn solve(mut solver: PdeSolver, cfg: &PdeConfig, rec: &Recording) -> Result<PdeRun> {
    let total = cfg.steps();
    let n_rec = rec.records.max(1) as u64;
    let record_at = |j: u64| (j * total + n_rec / 2) / n_rec;
    let record = |s: &PdeSolver| {
        let e = s.energy();
        PdeRecord {
            t: s.grid().time(),
            risk: e.risk,
            risk_normalized: e.risk / s.sq_norm_f,
            free_energy: e.free_energy,
            entropy: e.entropy,
            mass: s.grid().mass(),
        }
    };
    let mut records = vec![record(&solver)];
    let mut snapshots = Vec::new();
    if rec.snapshot_every > 0 {
        snapshots.push(solver.grid().clone());
    }
    let mut next = 1u64;
    let mut last_f = solver.energy().free_energy;
    let mut max_inc = f64::NEG_INFINITY;
    let mut max_mass_err = (solver.grid().mass() - 1.0).abs();
    let mut min_density = solver.grid().min_value();
    for k in 1..=total {
        solver.step(cfg.dt)?;
        // the clock is the step count, not the accumulated float sum
        solver.grid.set_time(k as f64 * cfg.dt);
        let f = if cfg.tau > 0.0 {
            solver.energy().free_energy
        } else {
            0.5 * solver.risk()
        };
        max_inc = max_inc.max(f - last_f);
        last_f = f;
        max_mass_err = max_mass_err.max((solver.grid().mass() - 1.0).abs());
        min_density = min_density.min(solver.grid().min_value());
        while next <= n_rec && record_at(next) == k {
            records.push(record(&solver));
            if rec.snapshot_every > 0 && next % rec.snapshot_every as u64 == 0 {
                snapshots.push(solver.grid().clone());
            }
            next += 1;
        }
    }
    Ok(PdeRun {
        records,
        snapshots,
        final_grid: solver.into_grid(),
        max_mass_error: max_mass_err,
        max_free_energy_increase: if total == 0 { 0.0 } else { max_inc },
        min_density,
    })
}

/// One explicit step of the `δ = 0` flow; builds a throwaway solver.
pub fn step_limit_pde(grid: &DensityGrid, cfg: &PdeConfig, target: &TargetFunction) -> Result<DensityGrid> {
    let cfg = PdeConfig {
        variant: PdeVariant::LimitDelta0,
        ..cfg.clone()
    };
    let mut s = PdeSolver::new(&cfg, target, None, grid.clone())?;
    s.step(cfg.dt)?;
    Ok(s.into_grid())
}

/// One explicit step of the convolution flow; builds a throwaway solver.
pub fn step_delta_pde(
    grid: &DensityGrid,
    cfg: &PdeConfig,
    kernel: &KernelSpec,
    target: &TargetFunction,
) -> Result<DensityGrid> {
    let cfg = PdeConfig {
        variant: PdeVariant::ConvolutionDelta { delta: kernel.delta() },
        ..cfg.clone()
    };
    let mut s = PdeSolver::new(&cfg, target, Some(kernel), grid.clone())?;
    s.step(cfg.dt)?;
    Ok(s.into_grid())
}

fn free_energy_from(risk: f64, tau: f64, grid: &DensityGrid) -> Energy {
    let s = entropy(grid);
    Energy {
        free_energy: 0.5 * risk - tau * s,
        risk,
        entropy: s,
        entropy_bound_ok: s <= grid.domain().volume().ln() + 1e-9,
    }
}

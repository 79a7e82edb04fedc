//! Regression targets `f = (base + c1) / c2` with analytic derivatives.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Shape};
use crate::quadrature::{integrate_adaptive, integrate_box};

/// A user-supplied smooth function with derivatives.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Row-major `d × d`.
    fn hessian(&self, x: &[f64]) -> Vec<f64>;
    /// Whether `concavity_alpha` may be asked for.
    fn concave(&self) -> bool {
        true
    }
}

#[derive(Clone)]
pub enum TargetKind {
    /// `(1 - e^{x-1}) / (1 - e^{-2})` on `[-1, 1]`, exactly as printed; its
    /// integral is `(1 + e^{-2}) / (1 - e^{-2}) ≈ 1.313`.
    Exp1D,
    /// `(1 - e^{x-1}) / (1 + e^{-2})`, the same shape rescaled to unit mass.
    Exp1DUnitMass,
    /// `(c1 - log(e^{⟨q1,x⟩} + e^{⟨q2,x⟩})) / c2`.
    LogSumExp { q1: Vec<f64>, q2: Vec<f64> },
    /// `(x + sin(5x - π/2) + c1) / c2`, not concave.
    Bimodal1D,
    Custom(Arc<dyn ScalarField>),
}

impl fmt::Debug for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetKind::Exp1D => write!(f, "Exp1D"),
            TargetKind::Exp1DUnitMass => write!(f, "Exp1DUnitMass"),
            TargetKind::LogSumExp { q1, q2 } => write!(f, "LogSumExp {{ q1: {q1:?}, q2: {q2:?} }}"),
            TargetKind::Bimodal1D => write!(f, "Bimodal1D"),
            TargetKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl TargetKind {
    pub fn name(&self) -> &'static str {
        match self {
            TargetKind::Exp1D => "exp1d",
            TargetKind::Exp1DUnitMass => "exp1d_unit_mass",
            TargetKind::LogSumExp { .. } => "log_sum_exp",
            TargetKind::Bimodal1D => "bimodal1d",
            TargetKind::Custom(_) => "custom",
        }
    }

    fn base_value(&self, x: &[f64]) -> f64 {
        match self {
            TargetKind::Exp1D | TargetKind::Exp1DUnitMass => 1.0 - (x[0] - 1.0).exp(),
            TargetKind::LogSumExp { q1, q2 } => -log_sum_exp(dot(q1, x), dot(q2, x)),
            TargetKind::Bimodal1D => x[0] + (5.0 * x[0] - FRAC_PI_2).sin(),
            TargetKind::Custom(g) => g.value(x),
        }
    }

    fn base_gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TargetKind::Exp1D | TargetKind::Exp1DUnitMass => vec![-(x[0] - 1.0).exp()],
            TargetKind::LogSumExp { q1, q2 } => {
                let p1 = softmax_first(dot(q1, x), dot(q2, x));
                q1.iter()
                    .zip(q2)
                    .map(|(a, b)| -(p1 * a + (1.0 - p1) * b))
                    .collect()
            }
            TargetKind::Bimodal1D => vec![1.0 + 5.0 * (5.0 * x[0] - FRAC_PI_2).cos()],
            TargetKind::Custom(g) => g.gradient(x),
        }
    }

    fn base_hessian(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TargetKind::Exp1D | TargetKind::Exp1DUnitMass => vec![-(x[0] - 1.0).exp()],
            TargetKind::LogSumExp { q1, q2 } => {
                // ∇²LSE = p1 p2 (q1 - q2)(q1 - q2)ᵀ
                let p1 = softmax_first(dot(q1, x), dot(q2, x));
                let w = p1 * (1.0 - p1);
                let d = q1.len();
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = -w * (q1[i] - q2[i]) * (q1[j] - q2[j]);
                    }
                }
                h
            }
            TargetKind::Bimodal1D => vec![-25.0 * (5.0 * x[0] - FRAC_PI_2).sin()],
            TargetKind::Custom(g) => g.hessian(x),
        }
    }

    fn is_concave(&self) -> bool {
        match self {
            TargetKind::Bimodal1D => false,
            TargetKind::Custom(g) => g.concave(),
            _ => true,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[inline]
fn softmax_first(a: f64, b: f64) -> f64 {
    1.0 / (1.0 + (b - a).exp())
}

/// A regression function on a domain, with its normalization bookkeeping.
#[derive(Debug, Clone)]
pub struct TargetFunction {
    kind: TargetKind,
    c1: f64,
    c2: f64,
    domain: Domain,
    sq_norm: f64,
}

const DOMAIN_SLACK: f64 = 1e-12;

impl TargetFunction {
    /// Builds the target, computing `c1, c2` for the kinds that are
    /// normalized to unit mass.
    pub fn new(kind: TargetKind, domain: Domain) -> Result<Self> {
        let dim = domain.dim();
        match &kind {
            TargetKind::Exp1D | TargetKind::Exp1DUnitMass | TargetKind::Bimodal1D if dim != 1 => {
                return Err(Error::BadInput(format!(
                    "{} is one-dimensional, domain has d = {dim}",
                    kind.name()
                )))
            }
            TargetKind::LogSumExp { q1, q2 } if q1.len() != dim || q2.len() != dim => {
                return Err(Error::BadInput(format!(
                    "log-sum-exp directions must have length {dim}"
                )))
            }
            _ => {}
        }
        let (c1, c2) = match &kind {
            TargetKind::Exp1D => (0.0, 1.0 - (-2.0f64).exp()),
            TargetKind::Exp1DUnitMass => (0.0, 1.0 + (-2.0f64).exp()),
            TargetKind::Custom(_) => (0.0, 1.0),
            TargetKind::LogSumExp { .. } | TargetKind::Bimodal1D => normalize(&kind, &domain)?,
        };
        let mut f = Self {
            kind,
            c1,
            c2,
            domain,
            sq_norm: 0.0,
        };
        f.sq_norm = f.integrate(|v| v * v)?;
        Ok(f)
    }

    /// Wraps a custom field used as-is (`c1 = 0`, `c2 = 1`).
    pub fn custom(field: Arc<dyn ScalarField>, domain: Domain) -> Result<Self> {
        Self::new(TargetKind::Custom(field), domain)
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Additive constant in `f = (base + c1) / c2`.
    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// `‖f‖²_{L²(Ω)}` (Lebesgue measure).
    pub fn sq_norm(&self) -> f64 {
        self.sq_norm
    }

    /// Unchecked evaluation; the caller guarantees `x ∈ Ω`.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.kind.base_value(x) + self.c1) / self.c2
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() || !self.domain.contains_with_slack(x, DOMAIN_SLACK) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.value(x))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.gradient_unchecked(x))
    }

    #[inline]
    pub fn gradient_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.kind
            .base_gradient(x)
            .into_iter()
            .map(|g| g / self.c2)
            .collect()
    }

    /// Row-major `d × d` Hessian.
    pub fn hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self
            .kind
            .base_hessian(x)
            .into_iter()
            .map(|h| h / self.c2)
            .collect())
    }

    /// `∫_Ω g(f(x)) dx`.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        integrate_over(&self.domain, |x| g(self.value(x)))
    }

    /// `α = min over a grid of λ_min(-∇²f)`; the grid includes the boundary.
    pub fn concavity_alpha(&self, grid_step: f64) -> Result<f64> {
        let min_eig = min_neg_hessian_eigenvalue(self, grid_step)?;
        if !self.kind.is_concave() || min_eig < -1e-10 {
            return Err(Error::NotConcave {
                min_eigenvalue: min_eig,
            });
        }
        Ok(min_eig)
    }
}

/// Integral over a box (tensor Gauss–Legendre) or, in one dimension,
/// adaptive quadrature.
fn integrate_over<F: Fn(&[f64]) -> f64>(domain: &Domain, f: F) -> Result<f64> {
    match domain.shape() {
        Shape::Box { lower, upper } if lower.len() == 1 => {
            integrate_adaptive(|x| f(&[x]), lower[0], upper[0], 1e-13)
        }
        Shape::Box { lower, upper } => {
            let (panels, order) = match lower.len() {
                2 => (16, 12),
                3 => (6, 10),
                _ => (4, 8),
            };
            Ok(integrate_box(lower, upper, panels, order, f))
        }
        Shape::Ball { .. } => Err(Error::Unsupported(
            "target integrals are implemented on boxes".into(),
        )),
    }
}

/// `(c1, c2)` with `c1 = -min(base)` (0 if the base is already non-negative)
/// and `c2 = ∫_Ω (base + c1)`, so that `f ≥ 0` and `∫_Ω f = 1`.
pub fn normalize(kind: &TargetKind, domain: &Domain) -> Result<(f64, f64)> {
    let min = base_minimum(kind, domain)?;
    let c1 = if min < 0.0 { -min } else { 0.0 };
    let c2 = integrate_over(domain, |x| kind.base_value(x) + c1)?;
    if !(c2 > 0.0 && c2.is_finite()) {
        return Err(Error::BadInput(format!("base integrates to {c2}")));
    }
    Ok((c1, c2))
}

fn base_minimum(kind: &TargetKind, domain: &Domain) -> Result<f64> {
    let (lower, upper) = match domain.shape() {
        Shape::Box { lower, upper } => (lower, upper),
        Shape::Ball { .. } => {
            return Err(Error::Unsupported("normalization is implemented on boxes".into()))
        }
    };
    let d = lower.len();
    match kind {
        TargetKind::LogSumExp { .. } => {
            // a concave function on a box attains its minimum at a vertex
            let mut best = f64::INFINITY;
            let mut x = vec![0.0; d];
            for mask in 0..(1usize << d) {
                for k in 0..d {
                    x[k] = if mask >> k & 1 == 1 { upper[k] } else { lower[k] };
                }
                best = best.min(kind.base_value(&x));
            }
            Ok(best)
        }
        _ if d == 1 => {
            let n = 10_000;
            let h = (upper[0] - lower[0]) / n as f64;
            let (mut best_i, mut best) = (0, f64::INFINITY);
            for i in 0..=n {
                let v = kind.base_value(&[lower[0] + h * i as f64]);
                if v < best {
                    best = v;
                    best_i = i;
                }
            }
            let a = (lower[0] + h * (best_i as f64 - 1.0)).max(lower[0]);
            let b = (lower[0] + h * (best_i as f64 + 1.0)).min(upper[0]);
            Ok(best.min(golden_min(|x| kind.base_value(&[x]), a, b)))
        }
        _ => Err(Error::Unsupported(format!(
            "base minimum for {} in d = {d}",
            kind.name()
        ))),
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..200 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
        if (b - a).abs() < 1e-15 {
            break;
        }
    }
    f(0.5 * (a + b))
}

fn min_neg_hessian_eigenvalue(f: &TargetFunction, grid_step: f64) -> Result<f64> {
    let (lower, upper) = f.domain.bounds();
    let d = lower.len();
    let counts: Vec<usize> = lower
        .iter()
        .zip(&upper)
        .map(|(l, u)| ((u - l) / grid_step).round().max(1.0) as usize)
        .collect();
    let total: usize = counts.iter().map(|c| c + 1).product();
    if total > 50_000_000 {
        return Err(Error::BadInput(format!(
            "concavity grid of {total} nodes is too large; use a coarser step"
        )));
    }
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut best = f64::INFINITY;
    loop {
        for k in 0..d {
            x[k] = lower[k] + (upper[k] - lower[k]) * idx[k] as f64 / counts[k] as f64;
        }
        if f.domain.contains(&x) {
            let h = f.hessian(&x)?;
            best = best.min(min_eigenvalue_of_negated(&h, d));
        }
        let mut k = 0;
        loop {
            if k == d {
                return Ok(best);
            }
            idx[k] += 1;
            if idx[k] <= counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn min_eigenvalue_of_negated(h: &[f64], d: usize) -> f64 {
    match d {
        1 => -h[0],
        2 => {
            let (a, b, c) = (-h[0], -h[1], -h[3]);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            mean - rad
        }
        _ => {
            let m = DMatrix::from_row_slice(d, d, h).map(|v| -v);
            SymmetricEigen::new(m).eigenvalues.min()
        }
    }
}

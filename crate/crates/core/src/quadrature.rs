//! Gauss–Legendre quadrature: fixed rules, composite panels, adaptive
//! bisection and tensor products over boxes.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on [-1, 1]; exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule with `panels` equal sub-intervals.
    pub fn composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + h * p as f64;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive bisection on [a, b] comparing a 10-point rule against the sum
/// over both halves, to relative tolerance `rel_tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let rule = GaussLegendre::new(10);
    let whole = rule.integrate(a, b, &f);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    let floor = 64.0 * f64::EPSILON * scale;
    let value = adapt(&rule, &f, a, b, whole, rel_tol * scale, floor, 0)?;
    if !value.is_finite() {
        return Err(Error::QuadratureFailure(format!(
            "non-finite integral on [{a}, {b}]"
        )));
    }
    Ok(value)
}

fn adapt<F: Fn(f64) -> f64>(
    rule: &GaussLegendre,
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    abs_tol: f64,
    floor: f64,
    depth: usize,
) -> Result<f64> {
    if !whole.is_finite() {
        return Err(Error::QuadratureFailure(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    let m = 0.5 * (a + b);
    let left = rule.integrate(a, m, f);
    let right = rule.integrate(m, b, f);
    let refined = left + right;
    if (refined - whole).abs() <= abs_tol.max(floor) {
        return Ok(refined);
    }
    if depth >= 48 {
        return Err(Error::QuadratureFailure(format!(
            "no convergence near [{a}, {b}] (estimate difference {:e})",
            (refined - whole).abs()
        )));
    }
    Ok(adapt(rule, f, a, m, left, 0.5 * abs_tol, floor, depth + 1)?
        + adapt(rule, f, m, b, right, 0.5 * abs_tol, floor, depth + 1)?)
}

/// Tensor-product composite Gauss–Legendre over the box `[lower, upper]`.
pub fn integrate_box<F: FnMut(&[f64]) -> f64>(
    lower: &[f64],
    upper: &[f64],
    panels: usize,
    order: usize,
    mut f: F,
) -> f64 {
    let d = lower.len();
    let rule = GaussLegendre::new(order);
    // Per-axis flattened (node, weight) lists.
    let axes: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|k| {
            let h = (upper[k] - lower[k]) / panels as f64;
            (0..panels)
                .flat_map(|p| {
                    let lo = lower[k] + h * p as f64;
                    rule.mapped(lo, lo + h).collect::<Vec<_>>()
                })
                .collect()
        })
        .collect();
    let per_axis = axes.first().map_or(0, Vec::len);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    if per_axis == 0 {
        return 0.0;
    }
    loop {
        let mut w = 1.0;
        for k in 0..d {
            let (node, weight) = axes[k][idx[k]];
            x[k] = node;
            w *= weight;
        }
        total += w * f(&x);
        // odometer increment
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

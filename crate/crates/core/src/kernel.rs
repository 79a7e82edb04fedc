//! The bump kernel `K(x) = C_d κ(|x|)`, its mollifier `K^δ(x) = δ^{-d} K(x/δ)`,
//! analytic gradients, and the pair potential `U^δ = ν₀ K^δ * K^δ`.
//!
//! The self-convolution `K * K` is radial; it is tabulated once for unit
//! width on `[0, 2c0]` together with its radial derivative and then rescaled
//! to any `δ`. Values are interpolated with cubic Hermite polynomials.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, Domain};
use crate::quadrature::{integrate_adaptive, GaussLegendre};

/// A radial profile `κ(t)`, `t = |x|`, supported on `[0, support]`.
pub trait RadialProfile: Send + Sync {
    fn value(&self, t: f64) -> f64;
    fn derivative(&self, t: f64) -> f64;
    fn support(&self) -> f64;
}

#[derive(Clone)]
pub enum Profile {
    /// `κ(t) = 1 - t² - 2t³ + 2t⁴` on `[0, 1]`.
    PaperQuartic,
    /// Indicator of the unit ball (the uniform bump).
    Indicator,
    Custom(Arc<dyn RadialProfile>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::PaperQuartic => write!(f, "PaperQuartic"),
            Profile::Indicator => write!(f, "Indicator"),
            Profile::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// `κ(t) = 1 - t² - 2t³ + 2t⁴` for `t ≤ 1`, else 0.
#[inline]
pub fn profile_kappa(t: f64) -> f64 {
    if t <= 1.0 {
        let t2 = t * t;
        1.0 - t2 - 2.0 * t2 * t + 2.0 * t2 * t2
    } else {
        0.0
    }
}

#[inline]
pub fn profile_kappa_derivative(t: f64) -> f64 {
    if t <= 1.0 {
        t * (-2.0 - 6.0 * t + 8.0 * t * t)
    } else {
        0.0
    }
}

impl Profile {
    pub fn support(&self) -> f64 {
        match self {
            Profile::PaperQuartic | Profile::Indicator => 1.0,
            Profile::Custom(p) => p.support(),
        }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Profile::PaperQuartic => profile_kappa(t),
            Profile::Indicator => {
                if t <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Custom(p) => {
                if t <= p.support() {
                    p.value(t)
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Profile::PaperQuartic => profile_kappa_derivative(t),
            Profile::Indicator => 0.0,
            Profile::Custom(p) => {
                if t <= p.support() {
                    p.derivative(t)
                } else {
                    0.0
                }
            }
        }
    }

    /// `κ'(t) / t`, finite at `t = 0` for smooth profiles.
    #[inline]
    fn derivative_over_t(&self, t: f64) -> f64 {
        match self {
            Profile::PaperQuartic => {
                if t <= 1.0 {
                    -2.0 - 6.0 * t + 8.0 * t * t
                } else {
                    0.0
                }
            }
            _ => {
                if t > 0.0 {
                    self.derivative(t) / t
                } else {
                    0.0
                }
            }
        }
    }
}

/// `C_d` such that `C_d ∫_{B(0, c0)} κ(|x|) dx = 1`.
pub fn normalization(dim: usize, profile: &Profile) -> Result<f64> {
    if dim == 0 {
        return Err(Error::BadInput("kernel dimension must be positive".into()));
    }
    let c0 = profile.support();
    let sphere = dim as f64 * unit_ball_volume(dim);
    let radial = integrate_adaptive(
        |t| profile.value(t) * t.powi(dim as i32 - 1),
        0.0,
        c0,
        1e-12,
    )?;
    let mass = sphere * radial;
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::QuadratureFailure(format!(
            "profile mass {mass} is not a positive finite number"
        )));
    }
    Ok(1.0 / mass)
}

/// Tabulated unit-width `K * K` and its radial derivative on `[0, 2c0]`.
#[derive(Debug, Clone)]
struct PairTable {
    step: f64,
    value: Vec<f64>,
    slope: Vec<f64>,
}

const PAIR_TABLE_INTERVALS: usize = 400;

impl PairTable {
    fn build(dim: usize, c0: f64, norm: f64, profile: &Profile) -> Result<Self> {
        let n = PAIR_TABLE_INTERVALS;
        let step = 2.0 * c0 / n as f64;
        let mut value = Vec::with_capacity(n + 1);
        let mut slope = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let s = step * i as f64;
            let (v, d) = match dim {
                1 => self_convolution_1d(s, c0, norm, profile),
                2 => self_convolution_2d(s, c0, norm, profile),
                _ => unreachable!(),
            };
            value.push(v);
            slope.push(d);
        }
        // Exact zeros at the support edge.
        value[n] = 0.0;
        slope[n] = 0.0;
        Ok(Self { step, value, slope })
    }

    /// `(K*K)(s)` and `d/ds (K*K)(s)` at radius `s ≥ 0` (unit width).
    fn eval(&self, s: f64) -> (f64, f64) {
        let n = self.value.len() - 1;
        let u = s / self.step;
        if u >= n as f64 {
            return (0.0, 0.0);
        }
        let i = u.floor() as usize;
        let t = u - i as f64;
        let h = self.step;
        let (p0, p1) = (self.value[i], self.value[i + 1]);
        let (m0, m1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let val = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1;
        let der = (1.0 - t) * self.slope[i] + t * self.slope[i + 1];
        (val, der)
    }
}

fn self_convolution_1d(s: f64, c0: f64, norm: f64, profile: &Profile) -> (f64, f64) {
    let lo = (s - c0).max(-c0);
    let hi = c0.min(s + c0);
    if hi <= lo {
        return (0.0, 0.0);
    }
    let rule = GaussLegendre::new(16);
    let mut cuts = vec![lo, hi];
    for c in [0.0, s] {
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut val = 0.0;
    let mut der = 0.0;
    for w in cuts.windows(2) {
        for (y, wt) in rule.mapped(w[0], w[1]) {
            let ky = norm * profile.value(y.abs());
            let z = s - y;
            val += wt * ky * norm * profile.value(z.abs());
            der += wt * ky * norm * profile.derivative(z.abs()) * z.signum();
        }
    }
    (val, der)
}

fn self_convolution_2d(s: f64, c0: f64, norm: f64, profile: &Profile) -> (f64, f64) {
    // Polar coordinates y = r(cos θ, sin θ); the partner bump K(s e1 - y) is
    // non-zero for θ < θ*(r). Integrate θ ∈ [0, θ*] and double by symmetry.
    let r_lo = (s - c0).max(0.0);
    let r_hi = c0.min(s + c0);
    if r_hi <= r_lo {
        return (0.0, 0.0);
    }
    let rule = GaussLegendre::new(24);
    let mut cuts = vec![r_lo, r_hi];
    for c in [(c0 - s).abs(), s] {
        if c > r_lo && c < r_hi {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut val = 0.0;
    let mut der = 0.0;
    for w in cuts.windows(2) {
        for (r, wr) in rule.mapped(w[0], w[1]) {
            let kr = norm * profile.value(r);
            if kr == 0.0 {
                continue;
            }
            let theta_max = if s == 0.0 || r == 0.0 {
                if (s - r).abs() < c0 {
                    std::f64::consts::PI
                } else {
                    0.0
                }
            } else {
                let c = (s * s + r * r - c0 * c0) / (2.0 * s * r);
                c.clamp(-1.0, 1.0).acos()
            };
            if theta_max <= 0.0 {
                continue;
            }
            let mut inner_v = 0.0;
            let mut inner_d = 0.0;
            for (theta, wt) in rule.mapped(0.0, theta_max) {
                let (sn, cs) = theta.sin_cos();
                let z1 = s - r * cs;
                let z2 = -r * sn;
                let zn = (z1 * z1 + z2 * z2).sqrt();
                inner_v += wt * norm * profile.value(zn);
                inner_d += wt * norm * profile.derivative_over_t(zn) * z1;
            }
            val += 2.0 * wr * r * kr * inner_v;
            der += 2.0 * wr * r * kr * inner_d;
        }
    }
    (val, der)
}

/// Immutable kernel specification with eagerly precomputed tables.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    dim: usize,
    c0: f64,
    delta: f64,
    norm_const: f64,
    profile: Profile,
    // cached δ^{-d} C_d and δ^{-d-2} C_d
    value_scale: f64,
    grad_scale: f64,
    pair: Option<PairTable>,
}

impl KernelSpec {
    /// The paper's quartic bump in `dim` dimensions with width `delta`.
    pub fn quartic(dim: usize, delta: f64) -> Result<Self> {
        Self::new(dim, delta, Profile::PaperQuartic)
    }

    pub fn new(dim: usize, delta: f64, profile: Profile) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::BadInput(format!("kernel width must be > 0, got {delta}")));
        }
        if let Profile::PaperQuartic = profile {
            debug_assert!(profile_kappa_derivative(1.0).abs() < 1e-15);
            debug_assert!(profile_kappa(1.0).abs() < 1e-15);
        }
        let norm_const = normalization(dim, &profile)?;
        let c0 = profile.support();
        let pair = if dim <= 2 {
            Some(PairTable::build(dim, c0, norm_const, &profile)?)
        } else {
            None
        };
        let dd = dim as i32;
        Ok(Self {
            dim,
            c0,
            delta,
            norm_const,
            value_scale: norm_const * delta.powi(-dd),
            grad_scale: norm_const * delta.powi(-dd - 2),
            profile,
            pair,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Support radius `c0·δ` of `K^δ`.
    pub fn radius(&self) -> f64 {
        self.c0 * self.delta
    }

    /// `K^δ` at squared distance `r2`; the hot path of the SGD loop.
    #[inline]
    pub fn eval_sq(&self, r2: f64) -> f64 {
        let rad = self.radius();
        if r2 >= rad * rad {
            return 0.0;
        }
        let t = r2.sqrt() / self.delta;
        self.value_scale * self.profile.value(t)
    }

    /// `K^δ(x) = δ^{-d} C_d κ(|x| / δ)`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_sq(x.iter().map(|v| v * v).sum())
    }

    /// Scalar `g` such that `∇K^δ(x) = g · x`; zero outside the support.
    #[inline]
    pub fn grad_factor_sq(&self, r2: f64) -> f64 {
        let rad = self.radius();
        if r2 >= rad * rad {
            return 0.0;
        }
        let t = r2.sqrt() / self.delta;
        self.grad_scale * self.profile.derivative_over_t(t)
    }

    /// `∇K^δ(x) = δ^{-d-1} C_d κ'(|x|/δ) x/|x|` (zero at the origin).
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let g = self.grad_factor_sq(x.iter().map(|v| v * v).sum());
        x.iter().map(|v| g * v).collect()
    }

    /// Both `K^δ(x)` and `∇K^δ(x)` as `(value, gradient factor)` at squared radius.
    #[inline]
    pub fn eval_and_grad_factor_sq(&self, r2: f64) -> (f64, f64) {
        let rad = self.radius();
        if r2 >= rad * rad {
            return (0.0, 0.0);
        }
        let t = r2.sqrt() / self.delta;
        (
            self.value_scale * self.profile.value(t),
            self.grad_scale * self.profile.derivative_over_t(t),
        )
    }

    fn pair_table(&self) -> Result<&PairTable> {
        self.pair.as_ref().ok_or_else(|| {
            Error::Unsupported(format!(
                "pair potential is only tabulated for d <= 2 (d = {})",
                self.dim
            ))
        })
    }

    /// `(K^δ * K^δ)(x)`, supported on `|x| < 2c0δ`.
    pub fn self_convolution(&self, x: &[f64]) -> Result<f64> {
        let table = self.pair_table()?;
        let s = crate::geometry::norm(x) / self.delta;
        Ok(table.eval(s).0 * self.delta.powi(-(self.dim as i32)))
    }

    /// `U^δ(x) = ν₀ (K^δ * K^δ)(x)`.
    pub fn pair_potential(&self, x: &[f64], nu0: f64) -> Result<f64> {
        Ok(nu0 * self.self_convolution(x)?)
    }

    /// `∇U^δ(x)`.
    pub fn grad_pair_potential(&self, x: &[f64], nu0: f64) -> Result<Vec<f64>> {
        let table = self.pair_table()?;
        let r = crate::geometry::norm(x);
        if r == 0.0 {
            return Ok(vec![0.0; x.len()]);
        }
        let (_, d) = table.eval(r / self.delta);
        let g = nu0 * d * self.delta.powi(-(self.dim as i32) - 1) / r;
        Ok(x.iter().map(|v| g * v).collect())
    }

    /// `(K^δ * g)(x) = ∫ K^δ(x - y) g(y) dy` by quadrature over the bump
    /// footprint. When `clip` is given, `g` is taken as zero outside it.
    pub fn convolve<G: Fn(&[f64]) -> f64>(
        &self,
        g: G,
        x: &[f64],
        clip: Option<&Domain>,
    ) -> Result<f64> {
        let mut acc = 0.0;
        self.footprint_quadrature(x, |y, w, _| {
            if clip.is_none_or(|d| d.contains(y)) {
                acc += w * self.eval(&diff(x, y)) * g(y);
            }
        })?;
        Ok(acc)
    }

    /// `∇(K^δ * g)(x) = ∫ ∇K^δ(x - y) g(y) dy`.
    pub fn grad_convolve<G: Fn(&[f64]) -> f64>(
        &self,
        g: G,
        x: &[f64],
        clip: Option<&Domain>,
    ) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        self.footprint_quadrature(x, |y, w, _| {
            if clip.is_none_or(|d| d.contains(y)) {
                let z = diff(x, y);
                let gv = w * g(y) * self.grad_factor_sq(z.iter().map(|v| v * v).sum());
                for (a, zi) in acc.iter_mut().zip(&z) {
                    *a += gv * zi;
                }
            }
        })?;
        Ok(acc)
    }

    /// Visits quadrature nodes `(y, weight, radius)` covering `B(x, c0δ)`.
    fn footprint_quadrature<F: FnMut(&[f64], f64, f64)>(&self, x: &[f64], mut visit: F) -> Result<()> {
        let rad = self.radius();
        match self.dim {
            1 => {
                let rule = GaussLegendre::new(12);
                let panels = 8;
                for (a, b) in [(x[0] - rad, x[0]), (x[0], x[0] + rad)] {
                    let h = (b - a) / panels as f64;
                    for p in 0..panels {
                        let lo = a + h * p as f64;
                        for (y, w) in rule.mapped(lo, lo + h) {
                            visit(&[y], w, (y - x[0]).abs());
                        }
                    }
                }
                Ok(())
            }
            2 => {
                let rule = GaussLegendre::new(16);
                let panels = 4;
                let n_theta = 96;
                let dtheta = 2.0 * std::f64::consts::PI / n_theta as f64;
                let h = rad / panels as f64;
                for p in 0..panels {
                    let lo = h * p as f64;
                    for (r, wr) in rule.mapped(lo, lo + h) {
                        for j in 0..n_theta {
                            let theta = (j as f64 + 0.5) * dtheta;
                            let (sn, cs) = theta.sin_cos();
                            let y = [x[0] + r * cs, x[1] + r * sn];
                            visit(&y, wr * r * dtheta, r);
                        }
                    }
                }
                Ok(())
            }
            d => Err(Error::Unsupported(format!(
                "footprint quadrature is implemented for d <= 2 (d = {d})"
            ))),
        }
    }
}

#[inline]
fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_box;
    use crate::rng::SimRng;

    #[test]
    fn kappa_values() {
        assert_eq!(profile_kappa(0.0), 1.0);
        assert_eq!(profile_kappa(1.0), 0.0);
        assert!((profile_kappa(0.5) - 0.625).abs() < 1e-15);
        assert_eq!(profile_kappa(1.5), 0.0);
    }

    #[test]
    fn normalization_constants() {
        // ∫_0^1 κ = 17/30 by a 10^6-point midpoint sum.
        let n = 1_000_000;
        let riemann: f64 = (0..n)
            .map(|i| profile_kappa((i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64;
        assert!((riemann - 17.0 / 30.0).abs() < 1e-10);
        let c1 = normalization(1, &Profile::PaperQuartic).unwrap();
        assert!((c1 - 1.0 / (2.0 * riemann)).abs() < 1e-10);
        assert!((c1 - 15.0 / 17.0).abs() < 1e-12);

        let radial: f64 = (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) / n as f64;
                profile_kappa(t) * t
            })
            .sum::<f64>()
            / n as f64;
        let c2 = normalization(2, &Profile::PaperQuartic).unwrap();
        assert!((c2 - 1.0 / (2.0 * std::f64::consts::PI * radial)).abs() < 1e-9);
        assert!((c2 - 0.868117).abs() < 1e-6);

        for d in 1..=5 {
            let c = normalization(d, &Profile::Indicator).unwrap();
            assert!((c - 1.0 / unit_ball_volume(d)).abs() < 1e-12);
        }
    }

    struct Singular;
    impl RadialProfile for Singular {
        fn value(&self, t: f64) -> f64 {
            1.0 / t
        }
        fn derivative(&self, t: f64) -> f64 {
            -1.0 / (t * t)
        }
        fn support(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn non_integrable_profile_fails() {
        let r = normalization(1, &Profile::Custom(Arc::new(Singular)));
        assert!(matches!(r, Err(Error::QuadratureFailure(_))));
    }

    #[test]
    fn kernel_point_values() {
        let k = KernelSpec::quartic(1, 0.2).unwrap();
        assert!((k.eval(&[0.0]) - 5.0 * 15.0 / 17.0).abs() < 1e-12);
        assert!((k.eval(&[0.0]) - 4.411_764_7).abs() < 1e-7);
        assert_eq!(k.eval(&[0.2]), 0.0);
        assert_eq!(k.eval(&[-0.3]), 0.0);
        assert_eq!(k.grad(&[0.25]), vec![0.0]);
        assert_eq!(k.grad(&[0.0]), vec![0.0]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = SimRng::new(3);
        for dim in [1usize, 2, 3] {
            let k = KernelSpec::quartic(dim, 0.3).unwrap();
            let h = 1e-6;
            let mut checked = 0;
            while checked < 1000 {
                let x: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-0.3, 0.3)).collect();
                let r = crate::geometry::norm(&x) / 0.3;
                // keep clear of the origin and of the support edge, where
                // central differences straddle a kink
                if !(0.02..0.98).contains(&r) {
                    continue;
                }
                let g = k.grad(&x);
                for a in 0..dim {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[a] += h;
                    xm[a] -= h;
                    let fd = (k.eval(&xp) - k.eval(&xm)) / (2.0 * h);
                    let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
                    assert!(
                        (fd - g[a]).abs() <= 1e-5 * scale,
                        "d={dim} x={x:?} axis {a}: fd {fd} vs {}",
                        g[a]
                    );
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn mollifier_mass_and_first_moment() {
        for dim in [1usize, 2] {
            for delta in [1.0 / 3.0, 0.2, 0.1, 0.05] {
                let k = KernelSpec::quartic(dim, delta).unwrap();
                // even panel counts put the |x|³ kink at the origin on a panel edge
                let lo = vec![-delta; dim];
                let hi = vec![delta; dim];
                let panels = if dim == 1 { 2 } else { 32 };
                let mass = integrate_box(&lo, &hi, panels, 16, |x| k.eval(x));
                assert!((mass - 1.0).abs() < 1e-6, "d={dim} δ={delta}: mass {mass}");
                let m1 = integrate_box(&lo, &hi, panels, 16, |x| k.eval(x) * x[0]);
                assert!(m1.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pair_potential_support_and_symmetry() {
        let k = KernelSpec::quartic(1, 0.1).unwrap();
        assert_eq!(k.pair_potential(&[0.2], 0.5).unwrap(), 0.0);
        assert_eq!(k.pair_potential(&[0.25], 0.5).unwrap(), 0.0);
        let mut rng = SimRng::new(8);
        for _ in 0..100 {
            let x = rng.uniform_in(-0.2, 0.2);
            assert_eq!(
                k.pair_potential(&[x], 0.5).unwrap(),
                k.pair_potential(&[-x], 0.5).unwrap()
            );
        }
        let k2 = KernelSpec::quartic(2, 0.1).unwrap();
        assert_eq!(
            k2.pair_potential(&[0.1, -0.05], 0.25).unwrap(),
            k2.pair_potential(&[-0.1, 0.05], 0.25).unwrap()
        );
        assert_eq!(k2.pair_potential(&[0.15, 0.15], 0.25).unwrap(), 0.0);
        let k4 = KernelSpec::quartic(4, 0.3).unwrap();
        assert!(matches!(
            k4.pair_potential(&[0.0; 4], 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn pair_potential_at_origin_is_kernel_energy() {
        let delta = 0.1;
        let nu0 = 0.5;
        let k = KernelSpec::quartic(1, delta).unwrap();
        let rule = GaussLegendre::new(20);
        let energy = nu0
            * (rule.integrate(-delta, 0.0, |x| k.eval(&[x]).powi(2))
                + rule.integrate(0.0, delta, |x| k.eval(&[x]).powi(2)));
        let table = k.pair_potential(&[0.0], nu0).unwrap();
        assert!(((table - energy) / energy).abs() < 1e-6);
    }

    #[test]
    fn self_convolution_has_unit_mass() {
        let k = KernelSpec::quartic(1, 0.2).unwrap();
        let rule = GaussLegendre::new(16);
        let m = rule.composite(-0.4, 0.4, 64, |x| k.self_convolution(&[x]).unwrap());
        assert!((m - 1.0).abs() < 1e-6);
        let k2 = KernelSpec::quartic(2, 0.2).unwrap();
        let m2 = 2.0
            * std::f64::consts::PI
            * rule.composite(0.0, 0.4, 64, |r| k2.self_convolution(&[r, 0.0]).unwrap() * r);
        assert!((m2 - 1.0).abs() < 1e-6, "2d mass {m2}");
    }

    #[test]
    fn pair_gradient_matches_differences() {
        for dim in [1usize, 2] {
            let k = KernelSpec::quartic(dim, 0.2).unwrap();
            let mut rng = SimRng::new(21);
            for _ in 0..200 {
                let x: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-0.25, 0.25)).collect();
                let g = k.grad_pair_potential(&x, 1.0).unwrap();
                let h = 1e-5;
                for a in 0..dim {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[a] += h;
                    xm[a] -= h;
                    let fd = (k.pair_potential(&xp, 1.0).unwrap()
                        - k.pair_potential(&xm, 1.0).unwrap())
                        / (2.0 * h);
                    // peak slope of U is O(δ^{-d-1}); allow table error
                    let scale = 0.2f64.powi(-(dim as i32) - 1);
                    assert!((fd - g[a]).abs() < 2e-4 * scale, "d={dim}: {fd} vs {}", g[a]);
                }
            }
        }
    }

    #[test]
    fn mollification_error_is_second_order() {
        // smooth g, interior point: |K^δ*g - g| = O(δ²)
        let g = |y: &[f64]| (1.3 * y[0]).sin() + y[0] * y[0];
        let x = [0.1];
        let errs: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&d| {
                let k = KernelSpec::quartic(1, d).unwrap();
                (k.convolve(g, &x, None).unwrap() - g(&x)).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "observed order {order}");
        }
    }

    #[test]
    fn convolution_gradient_matches_differences() {
        let k = KernelSpec::quartic(2, 0.15).unwrap();
        let g = |y: &[f64]| 1.0 + 0.5 * y[0] - y[1] * y[1];
        let x = [0.2, -0.1];
        let grad = k.grad_convolve(g, &x, None).unwrap();
        let h = 1e-5;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (k.convolve(g, &xp, None).unwrap() - k.convolve(g, &xm, None).unwrap())
                / (2.0 * h);
            assert!((fd - grad[a]).abs() < 1e-4, "{fd} vs {}", grad[a]);
        }
    }
}

//! Domains, the shrunken parameter region and orthogonal projection onto it.

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

/// A compact convex region: an axis-aligned box or a Euclidean ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    shape: Shape,
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

impl Domain {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "box bounds must be non-empty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!(
                    "box axis {i}: need lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            shape: Shape::Box { lower, upper },
        })
    }

    /// The cube `[-h, h]^d`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new_box(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidDomain("ball center must be non-empty".into()));
        }
        if !(radius.is_finite() && radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "ball needs finite center and radius > 0, got radius {radius}"
            )));
        }
        Ok(Self {
            shape: Shape::Ball { center, radius },
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Box { lower, .. } => lower.len(),
            Shape::Ball { center, .. } => center.len(),
        }
    }

    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| u - l).product(),
            Shape::Ball { radius, .. } => unit_ball_volume(self.dim()) * radius.powi(self.dim() as i32),
        }
    }

    /// `ν₀ = 1 / |Ω|`, the density of the uniform covariate law.
    pub fn nu0(&self) -> f64 {
        1.0 / self.volume()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_slack(x, 0.0)
    }

    pub fn contains_with_slack(&self, x: &[f64], slack: f64) -> bool {
        match &self.shape {
            Shape::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - slack && *v <= u + slack),
            Shape::Ball { center, radius } => dist(x, center) <= radius + slack,
        }
    }

    /// Radius of the largest ball centered at the origin inside the domain
    /// (zero or negative when the origin is not interior).
    pub fn inscribed_radius(&self) -> f64 {
        match &self.shape {
            Shape::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| u.min(-l))
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { center, radius } => radius - norm(center),
        }
    }

    /// Diameter of the domain.
    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| (u - l) * (u - l))
                .sum::<f64>()
                .sqrt(),
            Shape::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Box { lower, upper } => (lower.clone(), upper.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// The same shape scaled by `lambda` about the origin.
    fn scaled(&self, lambda: f64) -> Domain {
        let shape = match &self.shape {
            Shape::Box { lower, upper } => Shape::Box {
                lower: lower.iter().map(|v| lambda * v).collect(),
                upper: upper.iter().map(|v| lambda * v).collect(),
            },
            Shape::Ball { center, radius } => Shape::Ball {
                center: center.iter().map(|v| lambda * v).collect(),
                radius: lambda * radius,
            },
        };
        Domain { shape }
    }

    /// Orthogonal projection onto the domain.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let mut out = z.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, z: &mut [f64]) {
        match &self.shape {
            Shape::Box { lower, upper } => {
                for (v, (l, u)) in z.iter_mut().zip(lower.iter().zip(upper)) {
                    *v = v.clamp(*l, *u);
                }
            }
            Shape::Ball { center, radius } => {
                let r = dist(z, center);
                // Rounding slack keeps the map exactly idempotent.
                if r > radius * (1.0 + 4.0 * f64::EPSILON) {
                    let s = radius / r;
                    for (v, c) in z.iter_mut().zip(center) {
                        *v = c + s * (*v - c);
                    }
                }
            }
        }
    }

    /// One draw from `Unif(Ω)`. Balls use rejection from the bounding box.
    pub fn sample_uniform(&self, rng: &mut SimRng) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.sample_uniform_into(rng, &mut x);
        x
    }

    pub fn sample_uniform_into(&self, rng: &mut SimRng, x: &mut [f64]) {
        match &self.shape {
            Shape::Box { lower, upper } => {
                for (v, (l, u)) in x.iter_mut().zip(lower.iter().zip(upper)) {
                    *v = rng.uniform_in(*l, *u);
                }
            }
            Shape::Ball { center, radius } => loop {
                for (v, c) in x.iter_mut().zip(center) {
                    *v = c + radius * rng.uniform_in(-1.0, 1.0);
                }
                if dist(x, center) <= *radius {
                    return;
                }
            },
        }
    }
}

/// `Ω^δ = λ_δ Ω`, the region keeping every bump of radius `c0·δ` inside Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkenDomain {
    parent: Domain,
    region: Domain,
    lambda_delta: f64,
    c0: f64,
    delta: f64,
}

/// Largest `λ ≥ 0` with `λΩ ⊕ B(0, c0·δ) ⊆ Ω`.
///
/// Box with the origin inside: each face at signed distance `b` from the
/// origin moves to `λb`, so the constraint per face is `λ|b| + c0δ ≤ |b|`.
/// Ball `B(c, r)`: `λΩ = B(λc, λr)` and the constraint reads
/// `(1-λ)|c| + λr + c0δ ≤ r`.
pub fn lambda_delta(domain: &Domain, c0: f64, delta: f64) -> f64 {
    let reach = c0 * delta;
    match domain.shape() {
        Shape::Box { lower, upper } => lower
            .iter()
            .zip(upper)
            .flat_map(|(l, u)| [1.0 - reach / u, 1.0 - reach / (-l)])
            .fold(1.0, f64::min),
        Shape::Ball { center, radius } => 1.0 - reach / (radius - norm(center)),
    }
}

pub fn shrink(domain: &Domain, c0: f64, delta: f64) -> Result<ShrunkenDomain> {
    if !(c0 > 0.0 && delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidDomain(format!(
            "need c0 > 0 and finite delta >= 0, got c0 = {c0}, delta = {delta}"
        )));
    }
    let r = domain.inscribed_radius();
    if r <= 0.0 {
        return Err(Error::InvalidDomain(
            "the origin must be an interior point of the domain".into(),
        ));
    }
    if delta >= r / c0 {
        return Err(Error::DomainCollapsed {
            delta,
            limit: r / c0,
        });
    }
    let lambda = if delta == 0.0 {
        1.0
    } else {
        lambda_delta(domain, c0, delta)
    };
    Ok(ShrunkenDomain {
        parent: domain.clone(),
        region: domain.scaled(lambda),
        lambda_delta: lambda,
        c0,
        delta,
    })
}

impl ShrunkenDomain {
    pub fn parent(&self) -> &Domain {
        &self.parent
    }

    /// `Ω^δ` itself as a domain.
    pub fn region(&self) -> &Domain {
        &self.region
    }

    pub fn lambda_delta(&self) -> f64 {
        self.lambda_delta
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.region.contains(x)
    }

    /// `argmin{|z - x| : x ∈ Ω^δ}`.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        self.region.project(z)
    }

    pub fn project_in_place(&self, z: &mut [f64]) {
        self.region.project_in_place(z)
    }
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

//! Population risk `R_N(w) = ν₀ ∫_Ω (f − f̂(·; w))²`.

use super::Problem;
use crate::error::{Error, Result};
use crate::geometry::Shape;
use crate::grid::DensityGrid;
use crate::kernel::KernelSpec;
use crate::rng::SimRng;

/// How `R_N` is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskEval {
    /// Grid midpoint rule for boxes with `d <= 2` (step `1e-3` in 1D,
    /// `1e-2` in 2D), Monte Carlo with `20 000` fixed points otherwise.
    Auto,
    Grid { step: f64 },
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub risk: f64,
    /// `R_N / ‖f‖²`.
    pub risk_normalized: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone)]
enum Mode {
    Grid { template: DensityGrid, f: Vec<f64> },
    MonteCarlo { xs: Vec<f64>, f: Vec<f64> },
}

/// Precomputed quadrature nodes and target values for repeated risk
/// evaluations. Monte Carlo nodes are drawn once, so successive estimates
/// along a trajectory share their sampling error.
#[derive(Debug, Clone)]
pub struct RiskEvaluator {
    kernel: KernelSpec,
    nu0: f64,
    sq_norm: f64,
    mode: Mode,
}

impl RiskEvaluator {
    pub fn new(problem: &Problem, how: &RiskEval, seed: u64) -> Result<Self> {
        let domain = problem.domain();
        let d = domain.dim();
        let gridable = matches!(domain.shape(), Shape::Box { .. }) && d <= 2;
        let how = match *how {
            RiskEval::Auto if gridable => RiskEval::Grid {
                step: if d == 1 { 1e-3 } else { 1e-2 },
            },
            RiskEval::Auto => RiskEval::MonteCarlo { samples: 20_000 },
            other => other,
        };
        let target = &problem.target;
        let mode = match how {
            RiskEval::Grid { step } => {
                if !gridable {
                    return Err(Error::Unsupported("grid risk needs a box with d <= 2".into()));
                }
                if !(step > 0.0) {
                    return Err(Error::InvalidConfig(format!("risk grid step must be > 0 (got {step})")));
                }
                let template = DensityGrid::with_spacing(domain, step)?;
                let mut x = vec![0.0; d];
                let f = (0..template.len())
                    .map(|c| {
                        template.center_into(c, &mut x);
                        target.value(&x)
                    })
                    .collect();
                Mode::Grid { template, f }
            }
            RiskEval::MonteCarlo { samples } => {
                if samples < 2 {
                    return Err(Error::InvalidConfig("Monte Carlo risk needs >= 2 samples".into()));
                }
                let mut rng = SimRng::new(seed).split(4);
                let mut xs = vec![0.0; samples * d];
                for x in xs.chunks_exact_mut(d) {
                    domain.sample_uniform_into(&mut rng, x);
                }
                let f = xs.chunks_exact(d).map(|x| target.value(x)).collect();
                Mode::MonteCarlo { xs, f }
            }
            RiskEval::Auto => unreachable!(),
        };
        Ok(Self {
            kernel: problem.kernel.clone(),
            nu0: domain.nu0(),
            sq_norm: target.sq_norm(),
            mode,
        })
    }

    pub fn evaluate(&self, weights: &[f64]) -> RiskEstimate {
        let d = self.kernel.dim();
        let n = (weights.len() / d).max(1) as f64;
        let (risk, std_error) = match &self.mode {
            Mode::Grid { template, f } => {
                let mut fhat = template.clone();
                fhat.splat_bumps(weights, &self.kernel, 1.0 / n);
                let sum: f64 = f
                    .iter()
                    .zip(fhat.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (self.nu0 * sum * template.cell_volume(), 0.0)
            }
            Mode::MonteCarlo { xs, f } => {
                let m = f.len() as f64;
                let (mut s1, mut s2) = (0.0, 0.0);
                for (x, fx) in xs.chunks_exact(d).zip(f) {
                    let mut fhat = 0.0;
                    for w in weights.chunks_exact(d) {
                        let r2: f64 = x.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
                        fhat += self.kernel.eval_sq(r2);
                    }
                    let e = fx - fhat / n;
                    s1 += e * e;
                    s2 += e * e * e * e;
                }
                let mean = s1 / m;
                let var = ((s2 / m - mean * mean) * m / (m - 1.0)).max(0.0);
                (mean, (var / m).sqrt())
            }
        };
        RiskEstimate {
            risk,
            risk_normalized: risk / self.sq_norm,
            std_error,
        }
    }
}

/// One-off `R_N(w)`.
pub fn population_risk(problem: &Problem, weights: &[f64], how: &RiskEval) -> Result<RiskEstimate> {
    if weights.is_empty() || weights.len() % problem.dim() != 0 {
        return Err(Error::BadInput("weights do not match the problem dimension".into()));
    }
    Ok(RiskEvaluator::new(problem, how, 0)?.evaluate(weights))
}

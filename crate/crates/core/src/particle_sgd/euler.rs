//! Decoupled particles driven by a precomputed PDE drift:
//! `X ← P(X − ε ∇Ψ(X, ρ_{kε}) + √(2τε) g)`.
//!
//! With the same seed and particle count as an SGD run, the initial
//! positions and per-particle noise streams coincide with the SGD ones.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{sample_in_shrunken, InitSpec, LABEL_INIT, LABEL_NOISE};
use crate::error::{Error, Result};
use crate::geometry::ShrunkenDomain;
use crate::pde::DriftField;
use crate::rng::SimRng;

#[derive(Debug, Clone)]
pub struct EulerConfig {
    pub particles: usize,
    pub step_size: f64,
    pub steps: u64,
    pub noise_temp: f64,
    pub project: bool,
    pub init: InitSpec,
    pub seed: u64,
    /// Steps at which positions are kept (always including 0).
    pub record_steps: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct EulerRun {
    pub steps: Vec<u64>,
    pub times: Vec<f64>,
    /// One flat `M × d` array per recorded step.
    pub positions: Vec<Vec<f64>>,
}

pub fn euler_oracle(cfg: &EulerConfig, field: &DriftField, sd: &ShrunkenDomain) -> Result<EulerRun> {
    let d = sd.parent().dim();
    if field.dim() != d {
        return Err(Error::GridMismatch(format!(
            "drift field has d = {}, domain has d = {d}",
            field.dim()
        )));
    }
    if cfg.particles == 0 || !(cfg.step_size > 0.0) || !(cfg.noise_temp >= 0.0) {
        return Err(Error::InvalidConfig(
            "euler oracle needs particles >= 1, step_size > 0 and noise_temp >= 0".into(),
        ));
    }
    let schedule = field.schedule(cfg.step_size, cfg.steps)?;
    let root = SimRng::new(cfg.seed);
    let mut x = sample_in_shrunken(&cfg.init, sd, cfg.particles, &mut root.split(LABEL_INIT))?;
    let noise_root = root.split(LABEL_NOISE);
    let mut noise: Vec<_> = (0..cfg.particles as u64).map(|s| noise_root.channel(s)).collect();

    let mut marks = cfg.record_steps.clone();
    marks.push(0);
    marks.retain(|&k| k <= cfg.steps);
    marks.sort_unstable();
    marks.dedup();
    let mut out = EulerRun {
        steps: Vec::new(),
        times: Vec::new(),
        positions: Vec::new(),
    };
    let mut next = marks.iter().peekable();
    let amp = (2.0 * cfg.step_size * cfg.noise_temp).sqrt();
    let mut grad = vec![0.0; d];
    for k in 0..=cfg.steps {
        if next.peek() == Some(&&k) {
            next.next();
            out.steps.push(k);
            out.times.push(k as f64 * cfg.step_size);
            out.positions.push(x.clone());
        }
        if k == cfg.steps {
            break;
        }
        let j = schedule[k as usize];
        for (p, rng) in x.chunks_exact_mut(d).zip(noise.iter_mut()) {
            field.gradient_into(j, p, &mut grad);
            for a in 0..d {
                p[a] -= cfg.step_size * grad[a];
            }
            if amp > 0.0 {
                for v in p.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += amp * z;
                }
            }
            if cfg.project {
                sd.project_in_place(p);
            }
        }
    }
    Ok(out)
}

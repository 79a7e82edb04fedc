//! Online SGD over the centres of `N` bump neurons,
//! `w_i ← P(w_i − ε ∇K^δ(x − w_i)(y − f̂(x; w)) + √(2ετ) g_i)`,
//! with one fresh sample per step and a synchronous update.

mod euler;
mod risk;

pub use euler::{euler_oracle, EulerConfig, EulerRun};
pub use risk::{population_risk, RiskEstimate, RiskEval, RiskEvaluator};

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{shrink, Domain, ShrunkenDomain};
use crate::kernel::KernelSpec;
use crate::rng::SimRng;
use crate::target::TargetFunction;

/// Target, kernel and the shrunken parameter domain they induce.
#[derive(Debug, Clone)]
pub struct Problem {
    pub target: TargetFunction,
    pub kernel: KernelSpec,
    pub shrunken: ShrunkenDomain,
}

impl Problem {
    pub fn new(target: TargetFunction, kernel: KernelSpec) -> Result<Self> {
        if target.dim() != kernel.dim() {
            return Err(Error::InvalidConfig(format!(
                "target has d = {}, kernel has d = {}",
                target.dim(),
                kernel.dim()
            )));
        }
        let shrunken = shrink(target.domain(), kernel.c0(), kernel.delta())?;
        Ok(Self {
            target,
            kernel,
            shrunken,
        })
    }

    pub fn domain(&self) -> &Domain {
        self.target.domain()
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }
}

/// Proposal distribution for custom initialisations; draws are rejected
/// until they land in `Ω^δ`.
pub trait InitSampler: Send + Sync {
    fn propose(&self, rng: &mut SimRng, out: &mut [f64]);
}

#[derive(Clone)]
pub enum InitSpec {
    /// `N(0, σ²I)` conditioned on `Ω^δ`.
    TruncatedGaussian { sigma: f64 },
    UniformOnShrunken,
    Custom(Arc<dyn InitSampler>),
}

impl fmt::Debug for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::TruncatedGaussian { sigma } => write!(f, "TruncatedGaussian {{ sigma: {sigma} }}"),
            InitSpec::UniformOnShrunken => write!(f, "UniformOnShrunken"),
            InitSpec::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Where each step's `(x, y)` comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// `x ~ Unif(Ω)`, `y = f(x) + σ ξ`.
    Population { label_noise: f64 },
    /// Uniform draws with replacement from a fixed sample.
    Resample { xs: Arc<[f64]>, ys: Arc<[f64]> },
}

impl DataSource {
    pub fn population() -> Self {
        DataSource::Population { label_noise: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SgdConfig {
    pub n_neurons: usize,
    pub step_size: f64,
    pub noise_temp: f64,
    pub max_steps: u64,
    pub init: InitSpec,
    pub seed: u64,
    /// Project onto `Ω^δ` after every step.
    pub project: bool,
    /// Number of evenly spaced risk evaluations after step 0 (0: none).
    pub risk_records: usize,
    pub risk_eval: RiskEval,
    /// Keep the weights every this many steps (0: never).
    pub snapshot_every: u64,
}

impl SgdConfig {
    pub fn new(n_neurons: usize, step_size: f64, max_steps: u64, seed: u64) -> Self {
        Self {
            n_neurons,
            step_size,
            noise_temp: 0.0,
            max_steps,
            init: InitSpec::TruncatedGaussian { sigma: 1.0 / 3.0 },
            seed,
            project: true,
            risk_records: 100,
            risk_eval: RiskEval::Auto,
            snapshot_every: 0,
        }
    }

    /// `T = max_steps · ε`.
    pub fn horizon(&self) -> f64 {
        self.max_steps as f64 * self.step_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_neurons == 0 {
            return bad("n_neurons must be >= 1".into());
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return bad(format!("step_size must be finite and >= 0 (got {})", self.step_size));
        }
        if !(self.noise_temp >= 0.0 && self.noise_temp.is_finite()) {
            return bad(format!("noise_temp must be >= 0 (got {})", self.noise_temp));
        }
        if let InitSpec::TruncatedGaussian { sigma } = self.init {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return bad(format!("init sigma must be > 0 (got {sigma})"));
            }
        }
        Ok(())
    }
}

const LABEL_INIT: u64 = 1;
const LABEL_DATA: u64 = 2;
const LABEL_NOISE: u64 = 3;

/// The SGD iterate `w^k` with its random streams.
#[derive(Debug, Clone)]
pub struct ParticleState {
    dim: usize,
    weights: Vec<f64>,
    step: u64,
    data_rng: SimRng,
    noise: Vec<ChaCha8Rng>,
    stream_ids: Vec<u64>,
    factors: Vec<f64>,
    x: Vec<f64>,
}

impl ParticleState {
    /// Wraps explicit weights, deriving the data and per-particle noise
    /// streams from `seed` the same way `init_particles` does.
    pub fn from_weights(dim: usize, weights: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || weights.is_empty() || weights.len() % dim != 0 {
            return Err(Error::BadInput(format!(
                "{} coordinates do not form weights of dimension {dim}",
                weights.len()
            )));
        }
        let n = weights.len() / dim;
        let root = SimRng::new(seed);
        let noise_root = root.split(LABEL_NOISE);
        let stream_ids: Vec<u64> = (0..n as u64).collect();
        Ok(Self {
            dim,
            noise: stream_ids.iter().map(|&s| noise_root.channel(s)).collect(),
            stream_ids,
            weights,
            step: 0,
            data_rng: root.split(LABEL_DATA),
            factors: vec![0.0; n],
            x: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `N` consecutive `d`-vectors.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> &[f64] {
        &self.weights[i * self.dim..(i + 1) * self.dim]
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Noise sub-stream carried by each particle.
    pub fn stream_ids(&self) -> &[u64] {
        &self.stream_ids
    }

    /// Reorders particles so that new particle `i` is old particle
    /// `perm[i]`, moving each particle's noise stream with it.
    pub fn permute(&mut self, perm: &[usize]) -> Result<()> {
        let n = self.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::BadInput("not a permutation of the particles".into()));
        }
        let d = self.dim;
        let old_w = self.weights.clone();
        let old_noise = self.noise.clone();
        let old_ids = self.stream_ids.clone();
        for (i, &p) in perm.iter().enumerate() {
            self.weights[i * d..(i + 1) * d].copy_from_slice(&old_w[p * d..(p + 1) * d]);
            self.noise[i] = old_noise[p].clone();
            self.stream_ids[i] = old_ids[p];
        }
        Ok(())
    }

    /// `f̂(x; w) = (1/N) Σ K^δ(x − w_i)`.
    pub fn predict(&self, kernel: &KernelSpec, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for w in self.weights.chunks_exact(self.dim) {
            let r2: f64 = x.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
            acc += kernel.eval_sq(r2);
        }
        acc / self.len() as f64
    }
}

/// Draws `N` i.i.d. initial weights in `Ω^δ` by rejection.
pub fn init_particles(cfg: &SgdConfig, sd: &ShrunkenDomain) -> Result<ParticleState> {
    cfg.validate()?;
    let d = sd.parent().dim();
    let mut rng = SimRng::new(cfg.seed).split(LABEL_INIT);
    let weights = sample_in_shrunken(&cfg.init, sd, cfg.n_neurons, &mut rng)?;
    ParticleState::from_weights(d, weights, cfg.seed)
}

pub(crate) fn sample_in_shrunken(init: &InitSpec, sd: &ShrunkenDomain, n: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
    let d = sd.parent().dim();
    let mut out = Vec::with_capacity(n * d);
    let mut x = vec![0.0; d];
    let mut attempts: u64 = 0;
    let mut accepted: u64 = 0;
    while (accepted as usize) < n {
        match init {
            InitSpec::TruncatedGaussian { sigma } => x.iter_mut().for_each(|v| *v = sigma * rng.normal()),
            InitSpec::UniformOnShrunken => sd.region().sample_uniform_into(rng, &mut x),
            InitSpec::Custom(s) => s.propose(rng, &mut x),
        }
        attempts += 1;
        if sd.contains(&x) {
            out.extend_from_slice(&x);
            accepted += 1;
        }
        if attempts >= 10_000 && (accepted as f64) < 1e-3 * attempts as f64 {
            return Err(Error::InitRejectionFailure {
                acceptance: accepted as f64 / attempts as f64,
            });
        }
    }
    Ok(out)
}

/// One synchronous SGD step; every `f̂` evaluation uses `w^k`.
pub fn sgd_step(state: &mut ParticleState, cfg: &SgdConfig, problem: &Problem, data: &DataSource) -> Result<()> {
    let d = state.dim;
    let n = state.len();
    let kernel = &problem.kernel;
    let y = match data {
        DataSource::Population { label_noise } => {
            problem.domain().sample_uniform_into(&mut state.data_rng, &mut state.x);
            let mut y = problem.target.value(&state.x);
            if *label_noise > 0.0 {
                y += label_noise * state.data_rng.normal();
            }
            y
        }
        DataSource::Resample { xs, ys } => {
            let j = state.data_rng.index(ys.len());
            state.x.copy_from_slice(&xs[j * d..(j + 1) * d]);
            ys[j]
        }
    };
    let x = &state.x;
    let mut fhat = 0.0;
    for (w, g) in state.weights.chunks_exact(d).zip(state.factors.iter_mut()) {
        let r2: f64 = x.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
        let (k, gf) = kernel.eval_and_grad_factor_sq(r2);
        fhat += k;
        *g = gf;
    }
    fhat /= n as f64;
    // ∇K^δ(x − w_i) = g_i (x − w_i)
    let scale = cfg.step_size * (y - fhat);
    let noisy = cfg.noise_temp > 0.0;
    let amp = (2.0 * cfg.step_size * cfg.noise_temp).sqrt();
    for (i, w) in state.weights.chunks_exact_mut(d).enumerate() {
        let g = state.factors[i];
        let moved = g != 0.0 || noisy;
        if g != 0.0 {
            for a in 0..d {
                w[a] -= scale * g * (x[a] - w[a]);
            }
        }
        if noisy {
            let rng = &mut state.noise[i];
            for v in w.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += amp * z;
            }
        }
        if moved {
            if cfg.project {
                problem.shrunken.project_in_place(w);
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBlowup { step: state.step });
            }
        }
    }
    state.step += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskRecord {
    pub step: u64,
    pub t: f64,
    pub risk: f64,
    pub risk_normalized: f64,
    /// Monte Carlo standard error of `risk` (0 for grid quadrature).
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SgdRun {
    pub risk: Vec<RiskRecord>,
    pub snapshots: Vec<Snapshot>,
    pub state: ParticleState,
}

/// Steps `j · max_steps / records`, `j = 0..=records`, without duplicates.
pub fn record_steps(max_steps: u64, records: usize) -> Vec<u64> {
    if records == 0 {
        return Vec::new();
    }
    let r = records as u64;
    let mut out: Vec<u64> = (0..=r).map(|j| (j * max_steps + r / 2) / r).collect();
    out.dedup();
    out
}

/// Initialises and runs `max_steps` SGD steps.
pub fn run_sgd(cfg: &SgdConfig, problem: &Problem, data: &DataSource) -> Result<SgdRun> {
    let state = init_particles(cfg, &problem.shrunken)?;
    run_from(state, cfg, problem, data, &[], &mut |_| Ok(()))
}

/// Runs from a given state until `cfg.max_steps`, recording risk, taking
/// snapshots, and calling `observer` when the step index reaches one of
/// `checkpoints`.
pub fn run_from(
    mut state: ParticleState,
    cfg: &SgdConfig,
    problem: &Problem,
    data: &DataSource,
    checkpoints: &[u64],
    observer: &mut dyn FnMut(&ParticleState) -> Result<()>,
) -> Result<SgdRun> {
    cfg.validate()?;
    if state.len() != cfg.n_neurons {
        return Err(Error::InvalidConfig(format!(
            "state has {} particles, config asks for {}",
            state.len(),
            cfg.n_neurons
        )));
    }
    if let DataSource::Resample { xs, ys } = data {
        if ys.is_empty() || xs.len() != ys.len() * problem.dim() {
            return Err(Error::BadInput("resampling data has inconsistent shape".into()));
        }
    }
    let evaluator = match cfg.risk_records {
        0 => None,
        _ => Some(RiskEvaluator::new(problem, &cfg.risk_eval, cfg.seed)?),
    };
    let mut records_at = record_steps(cfg.max_steps, cfg.risk_records).into_iter().peekable();
    let mut checks = checkpoints.to_vec();
    checks.sort_unstable();
    checks.dedup();
    let mut checks = checks.into_iter().peekable();
    let mut risk = Vec::new();
    let mut snapshots = Vec::new();
    loop {
        let k = state.step;
        if let Some(ev) = evaluator.as_ref().filter(|_| records_at.peek() == Some(&k)) {
            records_at.next();
            let est = ev.evaluate(state.weights());
            risk.push(RiskRecord {
                step: k,
                t: k as f64 * cfg.step_size,
                risk: est.risk,
                risk_normalized: est.risk_normalized,
                std_error: est.std_error,
            });
        }
        if cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0 {
            snapshots.push(Snapshot {
                step: k,
                weights: state.weights.clone(),
            });
        }
        while checks.peek().is_some_and(|&c| c <= k) {
            if checks.next() == Some(k) {
                observer(&state)?;
            }
        }
        if k >= cfg.max_steps {
            break;
        }
        sgd_step(&mut state, cfg, problem, data)?;
    }
    Ok(SgdRun {
        risk,
        snapshots,
        state,
    })
}

#[cfg(test)]
mod tests;

//! Ridge readout on bump features `f̂(x) = Σ a_j K^δ(x − w_j)`, comparing
//! label-independent centres with centres learned by projected SGD.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::particle_sgd::{run_from, init_particles, DataSource, InitSpec, Problem, RiskEval, SgdConfig};
use crate::rng::SimRng;
use crate::target::TargetFunction;

/// Samples `(x_i, f(x_i))` with the last `max(n/10, 40)` points held out.
#[derive(Debug, Clone)]
pub struct Dataset {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    holdout: usize,
}

pub fn holdout_size(n: usize) -> usize {
    (n / 10).max(40)
}

impl Dataset {
    pub fn new(dim: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = ys.len();
        if dim == 0 || xs.len() != n * dim {
            return Err(Error::BadInput("dataset xs and ys disagree in shape".into()));
        }
        let holdout = holdout_size(n);
        if holdout >= n {
            return Err(Error::BadInput(format!(
                "n = {n} leaves no training points after a hold-out of {holdout}"
            )));
        }
        Ok(Self { dim, xs, ys, holdout })
    }

    /// `n` noiseless samples with `x ~ Unif(Ω)`.
    pub fn sample(target: &TargetFunction, n: usize, rng: &mut SimRng) -> Result<Self> {
        let (xs, ys) = sample_points(target, n, rng);
        Self::new(target.dim(), xs, ys)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn n_train(&self) -> usize {
        self.len() - self.holdout
    }

    pub fn n_holdout(&self) -> usize {
        self.holdout
    }

    pub fn train_xs(&self) -> &[f64] {
        &self.xs[..self.n_train() * self.dim]
    }

    pub fn train_ys(&self) -> &[f64] {
        &self.ys[..self.n_train()]
    }

    pub fn holdout_xs(&self) -> &[f64] {
        &self.xs[self.n_train() * self.dim..]
    }

    pub fn holdout_ys(&self) -> &[f64] {
        &self.ys[self.n_train()..]
    }
}

/// `n` points `x ~ Unif(Ω)` and their labels `f(x)`.
pub fn sample_points(target: &TargetFunction, n: usize, rng: &mut SimRng) -> (Vec<f64>, Vec<f64>) {
    let d = target.dim();
    let mut xs = vec![0.0; n * d];
    for x in xs.chunks_exact_mut(d) {
        target.domain().sample_uniform_into(rng, x);
    }
    let ys = xs.chunks_exact(d).map(|x| target.value(x)).collect();
    (xs, ys)
}

/// `Z[i][j] = K^δ(x_i − w_j)`.
pub fn build_design(xs: &[f64], centers: &[f64], kernel: &KernelSpec) -> Result<DMatrix<f64>> {
    let d = kernel.dim();
    if xs.len() % d != 0 || centers.len() % d != 0 {
        return Err(Error::BadInput(format!("points and centres must be {d}-vectors")));
    }
    let (n, m) = (xs.len() / d, centers.len() / d);
    let mut z = DMatrix::zeros(n, m);
    for (j, w) in centers.chunks_exact(d).enumerate() {
        for (i, x) in xs.chunks_exact(d).enumerate() {
            let r2: f64 = x.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
            z[(i, j)] = kernel.eval_sq(r2);
        }
    }
    Ok(z)
}

/// Normal equations `(ZᵀZ + λI) a = Zᵀy` for one design, reusable across `λ`.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    gram: DMatrix<f64>,
    zty: DVector<f64>,
}

impl RidgeSystem {
    pub fn new(z: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if z.nrows() != y.len() {
            return Err(Error::BadInput(format!("Z has {} rows but y has {} entries", z.nrows(), y.len())));
        }
        if z.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::BadInput("non-finite entry in Z or y".into()));
        }
        let y = DVector::from_column_slice(y);
        Ok(Self {
            gram: z.tr_mul(z),
            zty: z.tr_mul(&y),
        })
    }

    /// Cholesky solve with one step of iterative refinement; fails unless
    /// the residual is at most `1e-8 ‖Zᵀy‖`.
    pub fn solve(&self, lambda: f64) -> Result<DVector<f64>> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::BadInput(format!("ridge lambda must be > 0 (got {lambda})")));
        }
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SolveFailure(format!("ZᵀZ + λI not positive definite at λ = {lambda}")))?;
        let mut x = chol.solve(&self.zty);
        let r = &self.zty - &a * &x;
        x += chol.solve(&r);
        let res = (&self.zty - &a * &x).norm();
        let scale = self.zty.norm();
        if !(res <= 1e-8 * scale) && res != 0.0 {
            return Err(Error::SolveFailure(format!(
                "ridge residual {res:e} exceeds 1e-8 · ‖Zᵀy‖ = {:e}",
                1e-8 * scale
            )));
        }
        Ok(x)
    }
}

/// `â = (ZᵀZ + λI)⁻¹ Zᵀy`.
pub fn ridge_solve(z: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<DVector<f64>> {
    RidgeSystem::new(z, y)?.solve(lambda)
}

fn mean_sq_error(z: &DMatrix<f64>, a: &DVector<f64>, y: &[f64]) -> f64 {
    let pred = z * a;
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub centers: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub lambda: f64,
    pub train_error: f64,
    pub holdout_error: f64,
}

impl RidgeFit {
    pub fn predict(&self, kernel: &KernelSpec, x: &[f64]) -> f64 {
        let d = kernel.dim();
        self.centers
            .chunks_exact(d)
            .zip(&self.coeffs)
            .map(|(w, a)| {
                let r2: f64 = x.iter().zip(w).map(|(p, q)| (p - q) * (p - q)).sum();
                a * kernel.eval_sq(r2)
            })
            .sum()
    }
}

/// Fits on the training part for every `λ` and keeps the one with the
/// smallest hold-out error.
pub fn fit_with_holdout(data: &Dataset, centers: &[f64], kernel: &KernelSpec, lambdas: &[f64]) -> Result<RidgeFit> {
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    let z = build_design(data.train_xs(), centers, kernel)?;
    let zh = build_design(data.holdout_xs(), centers, kernel)?;
    let sys = RidgeSystem::new(&z, data.train_ys())?;
    let mut best: Option<RidgeFit> = None;
    for &lambda in lambdas {
        let a = sys.solve(lambda)?;
        let holdout_error = mean_sq_error(&zh, &a, data.holdout_ys());
        if best.as_ref().is_none_or(|b| holdout_error < b.holdout_error) {
            best = Some(RidgeFit {
                centers: centers.to_vec(),
                train_error: mean_sq_error(&z, &a, data.train_ys()),
                coeffs: a.iter().copied().collect(),
                lambda,
                holdout_error,
            });
        }
    }
    Ok(best.expect("lambda grid is non-empty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Centres i.i.d. uniform on Ω.
    RandomW,
    /// Centres drawn from the training inputs.
    DataPointsW,
    /// Centres from projected SGD on the training sample.
    OptimizedW,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::RandomW => "random_w",
            Scheme::DataPointsW => "data_points_w",
            Scheme::OptimizedW => "optimized_w",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random_w" => Ok(Scheme::RandomW),
            "data_points_w" => Ok(Scheme::DataPointsW),
            "optimized_w" => Ok(Scheme::OptimizedW),
            _ => Err(Error::InvalidConfig(format!("unknown scheme `{s}`"))),
        }
    }
}

/// `count` values log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone)]
pub struct FeatureConfig {
    pub target: TargetFunction,
    pub kernel: KernelSpec,
    pub n_samples: usize,
    pub n_neurons: usize,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub lambdas: Vec<f64>,
    pub kmax: Vec<u64>,
    pub step_size: f64,
    pub test_size: usize,
    pub seed: u64,
}

impl FeatureConfig {
    /// Settings of the random-vs-learned features comparison, with `δ = 1/3`.
    pub fn standard(target: TargetFunction, n_samples: usize, n_neurons: usize, seed: u64) -> Result<Self> {
        let kernel = KernelSpec::quartic(target.dim(), 1.0 / 3.0)?;
        Ok(Self {
            target,
            kernel,
            n_samples,
            n_neurons,
            trials: 20,
            schemes: vec![Scheme::RandomW, Scheme::DataPointsW, Scheme::OptimizedW],
            lambdas: log_grid(1e-6, 1e1, 8),
            kmax: vec![5_000, 15_000, 50_000, 150_000, 500_000, 1_500_000],
            step_size: 5e-4,
            test_size: 10_000,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.kernel.dim() != self.target.dim() {
            return bad("kernel and target dimensions differ");
        }
        if self.n_neurons == 0 || self.trials == 0 || self.test_size == 0 {
            return bad("n_neurons, trials and test_size must be >= 1");
        }
        if self.schemes.is_empty() {
            return bad("no schemes selected");
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l > 0.0)) {
            return bad("lambdas must be a non-empty list of positive values");
        }
        if self.schemes.contains(&Scheme::OptimizedW) && self.kmax.is_empty() {
            return bad("optimized_w needs a non-empty kmax grid");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size must be > 0");
        }
        if holdout_size(self.n_samples) >= self.n_samples {
            return bad("n_samples too small for the hold-out split");
        }
        Ok(())
    }
}

/// One `(scheme, trial)` result.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub scheme: Scheme,
    pub n_samples: usize,
    pub n_neurons: usize,
    pub trial: usize,
    pub lambda: f64,
    /// Selected SGD iteration count (`optimized_w` only).
    pub kmax: Option<u64>,
    pub test_risk_normalized: f64,
}

const LABEL_DATA: u64 = 1;
const LABEL_TEST: u64 = 2;
const LABEL_CENTERS: u64 = 3;
const LABEL_SGD: u64 = 4;

/// `‖f − f̂‖²/‖f‖²` estimated as `mean_test (f − f̂)² / ‖f‖²`, matching the
/// convention of the population risk.
fn test_risk(fit: &RidgeFit, kernel: &KernelSpec, test_xs: &[f64], test_ys: &[f64], sq_norm: f64) -> f64 {
    let d = kernel.dim();
    let mse = test_xs
        .chunks_exact(d)
        .zip(test_ys)
        .map(|(x, y)| (y - fit.predict(kernel, x)).powi(2))
        .sum::<f64>()
        / test_ys.len() as f64;
    mse / sq_norm
}

fn optimized_fit(cfg: &FeatureConfig, data: &Dataset, seed: u64) -> Result<(RidgeFit, u64)> {
    let problem = Problem::new(cfg.target.clone(), cfg.kernel.clone())?;
    let mut kmax = cfg.kmax.clone();
    kmax.sort_unstable();
    kmax.dedup();
    let mut sgd = SgdConfig::new(cfg.n_neurons, cfg.step_size, *kmax.last().unwrap_or(&0), seed);
    sgd.init = InitSpec::UniformOnShrunken;
    sgd.risk_records = 0;
    sgd.risk_eval = RiskEval::Auto;
    let source = DataSource::Resample {
        xs: data.train_xs().into(),
        ys: data.train_ys().into(),
    };
    let state = init_particles(&sgd, &problem.shrunken)?;
    let mut best: Option<(RidgeFit, u64)> = None;
    run_from(state, &sgd, &problem, &source, &kmax, &mut |st| {
        let fit = fit_with_holdout(data, st.weights(), &cfg.kernel, &cfg.lambdas)?;
        if best.as_ref().is_none_or(|(b, _)| fit.holdout_error < b.holdout_error) {
            best = Some((fit, st.step_index()));
        }
        Ok(())
    })?;
    best.ok_or_else(|| Error::InvalidConfig("no kmax checkpoint was reached".into()))
}

/// All schemes on one trial's data; every scheme sees the same sample.
pub fn run_trial(cfg: &FeatureConfig, trial: usize) -> Result<Vec<FeatureRow>> {
    cfg.validate()?;
    let root = SimRng::new(cfg.seed).split(1_000 + trial as u64);
    let d = cfg.target.dim();
    let data = Dataset::sample(&cfg.target, cfg.n_samples, &mut root.split(LABEL_DATA))?;
    let (test_xs, test_ys) = sample_points(&cfg.target, cfg.test_size, &mut root.split(LABEL_TEST));
    let sq_norm = cfg.target.sq_norm();
    let mut rows = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let mut rng = root.split(LABEL_CENTERS + 16 * scheme as u64);
        let (fit, kmax) = match scheme {
            Scheme::RandomW => {
                let mut c = vec![0.0; cfg.n_neurons * d];
                for w in c.chunks_exact_mut(d) {
                    cfg.target.domain().sample_uniform_into(&mut rng, w);
                }
                (fit_with_holdout(&data, &c, &cfg.kernel, &cfg.lambdas)?, None)
            }
            Scheme::DataPointsW => {
                let pool = data.n_train();
                let picks: Vec<usize> = if cfg.n_neurons <= pool {
                    index::sample(&mut rng.channel(0), pool, cfg.n_neurons).into_vec()
                } else {
                    (0..cfg.n_neurons).map(|_| rng.index(pool)).collect()
                };
                let xs = data.train_xs();
                let c: Vec<f64> = picks.iter().flat_map(|&i| xs[i * d..(i + 1) * d].iter().copied()).collect();
                (fit_with_holdout(&data, &c, &cfg.kernel, &cfg.lambdas)?, None)
            }
            Scheme::OptimizedW => {
                let seed = root.split(LABEL_SGD).key();
                let (fit, k) = optimized_fit(cfg, &data, seed)?;
                (fit, Some(k))
            }
        };
        rows.push(FeatureRow {
            scheme,
            n_samples: cfg.n_samples,
            n_neurons: cfg.n_neurons,
            trial,
            lambda: fit.lambda,
            kmax,
            test_risk_normalized: test_risk(&fit, &cfg.kernel, &test_xs, &test_ys, sq_norm),
        });
    }
    Ok(rows)
}

/// Runs all trials in parallel; rows are ordered by trial, then scheme.
pub fn compare_schemes(cfg: &FeatureConfig) -> Result<Vec<FeatureRow>> {
    cfg.validate()?;
    let per_trial: Vec<Vec<FeatureRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub n_samples: usize,
    pub n_neurons: usize,
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation over trials.
    pub std_dev: f64,
}

pub fn summarize(rows: &[FeatureRow]) -> Vec<SchemeSummary> {
    let mut keys: Vec<(Scheme, usize, usize)> = rows.iter().map(|r| (r.scheme, r.n_samples, r.n_neurons)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(scheme, n_samples, n_neurons)| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| (r.scheme, r.n_samples, r.n_neurons) == (scheme, n_samples, n_neurons))
                .map(|r| r.test_risk_normalized)
                .collect();
            let m = v.len() as f64;
            let mean = v.iter().sum::<f64>() / m;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            SchemeSummary {
                scheme,
                n_samples,
                n_neurons,
                trials: v.len(),
                mean,
                std_dev: var.sqrt(),
            }
        })
        .collect()
}

/// One-sided sign test: `P(Bin(trials, 1/2) >= wins)`.
pub fn sign_test_p(wins: usize, trials: usize) -> f64 {
    let mut p = 0.0;
    let mut c = 1.0f64;
    for j in 0..=trials {
        if j >= wins {
            p += c;
        }
        c *= (trials - j) as f64 / (j + 1) as f64;
    }
    p / 2f64.powi(trials as i32)
}

/// Trials where scheme `a` has strictly lower test risk than `b`.
pub fn paired_wins(rows: &[FeatureRow], a: Scheme, b: Scheme) -> (usize, usize) {
    let find = |s: Scheme, t: usize| rows.iter().find(|r| r.scheme == s && r.trial == t);
    let mut trials: Vec<usize> = rows.iter().map(|r| r.trial).collect();
    trials.sort_unstable();
    trials.dedup();
    let mut wins = 0;
    let mut total = 0;
    for t in trials {
        if let (Some(ra), Some(rb)) = (find(a, t), find(b, t)) {
            total += 1;
            if ra.test_risk_normalized < rb.test_risk_normalized {
                wins += 1;
            }
        }
    }
    (wins, total)
}

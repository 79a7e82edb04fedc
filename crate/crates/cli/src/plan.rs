//! Validation: turns a resolved config into ready-to-run core objects.
//! Nothing here simulates; every failure is a validation error naming a key.

use mfb_core::features::{FeatureConfig, Scheme};
use mfb_core::particle_sgd::RiskEval;
use mfb_core::pde::{initial_density, InitialDensity, PdeConfig, PdeRun, PdeSolver, PdeVariant, Recording};
use mfb_core::{
    shrink, DataSource, DensityGrid, Domain, InitSpec, KernelSpec, Problem, Profile, SgdConfig, Shape, SimRng,
    TargetFunction, TargetKind,
};

use crate::config::{
    DomainSpec, ExperimentConfig, ExperimentKind, InitSection, PdeSection, PdeVariantName, ProfileName,
    RiskEvalSection, SgdSection, TargetSpec,
};
use crate::error::CliError;

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub target: TargetFunction,
    pub kernel: Option<KernelSpec>,
    pub job: Job,
}

#[derive(Debug, Clone)]
pub enum Job {
    SgdVsPde {
        problem: Problem,
        sgd: SgdConfig,
        data: DataSource,
        pde: PdeJob,
    },
    PdeOnly {
        pde: PdeJob,
    },
    Features {
        cfg: FeatureConfig,
    },
    Probe {
        rho_a: DensityGrid,
        rho_b: DensityGrid,
        points: usize,
    },
    Chaos {
        problem: Problem,
        /// Template; `n_neurons` and `seed` are set per run.
        sgd: SgdConfig,
        data: DataSource,
        pde: PdeJob,
        n_values: Vec<usize>,
        seeds: usize,
    },
}

/// A PDE run with its initial density.
#[derive(Debug, Clone)]
pub struct PdeJob {
    pub cfg: PdeConfig,
    pub initial: DensityGrid,
    pub kernel: Option<KernelSpec>,
    pub recording: Recording,
}

impl PdeJob {
    pub fn run(&self, target: &TargetFunction) -> mfb_core::Result<PdeRun> {
        let solver = PdeSolver::new(&self.cfg, target, self.kernel.as_ref(), self.initial.clone())?;
        mfb_core::pde::solve(solver, &self.cfg, &self.recording)
    }
}

/// Child seed `label` of `seed`, stable across platforms.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    SimRng::new(seed).split(label).key()
}

fn at<T>(key: &str, r: mfb_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::validation(key, e.to_string()))
}

fn check(ok: bool, key: &str, message: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::validation(key, message()))
    }
}

fn positive(x: f64, key: &str) -> Result<(), CliError> {
    check(x > 0.0 && x.is_finite(), key, || format!("must be finite and > 0 (got {x})"))
}

fn non_negative(x: f64, key: &str) -> Result<(), CliError> {
    check(x >= 0.0 && x.is_finite(), key, || format!("must be finite and >= 0 (got {x})"))
}

/// `round(horizon / step)`, insisting that the ratio is an integer.
pub fn step_count(horizon: f64, step: f64, key: &str) -> Result<u64, CliError> {
    let n = (horizon / step).round();
    check(n >= 1.0 && n <= 1e11, key, || {
        format!("horizon / step = {} must be between 1 and 1e11", horizon / step)
    })?;
    check((n * step - horizon).abs() <= 1e-9 * horizon, key, || {
        format!("horizon {horizon} is not a whole number of steps of size {step}")
    })?;
    Ok(n as u64)
}

pub fn build_domain(spec: &DomainSpec) -> Result<Domain, CliError> {
    match spec {
        DomainSpec::Box { lower, upper } => at("domain", Domain::new_box(lower.clone(), upper.clone())),
        DomainSpec::Ball { center, radius } => at("domain", Domain::new_ball(center.clone(), *radius)),
    }
}

pub fn build_target(spec: &TargetSpec, domain: Domain) -> Result<TargetFunction, CliError> {
    let kind = match spec {
        TargetSpec::Exp1d {} => TargetKind::Exp1D,
        TargetSpec::Exp1dUnitMass {} => TargetKind::Exp1DUnitMass,
        TargetSpec::LogSumExp { q1, q2 } => {
            check(q1.len() == q2.len() && !q1.is_empty(), "target.q2", || {
                format!("q1 has {} entries, q2 has {}", q1.len(), q2.len())
            })?;
            check(q1.iter().chain(q2).all(|v| v.is_finite()), "target", || "q1 and q2 must be finite".into())?;
            TargetKind::LogSumExp {
                q1: q1.clone(),
                q2: q2.clone(),
            }
        }
        TargetSpec::Bimodal1d {} => TargetKind::Bimodal1D,
    };
    check(domain.dim() == spec.dim(), "domain", || {
        format!("domain has d = {}, target has d = {}", domain.dim(), spec.dim())
    })?;
    at("target", TargetFunction::new(kind, domain))
}

fn build_kernel(cfg: &ExperimentConfig, dim: usize) -> Result<KernelSpec, CliError> {
    let k = cfg.section("kernel", &cfg.kernel)?;
    positive(k.delta, "kernel.delta")?;
    let profile = match k.profile {
        ProfileName::Quartic => Profile::PaperQuartic,
        ProfileName::Indicator => Profile::Indicator,
    };
    at("kernel", KernelSpec::new(dim, k.delta, profile))
}

fn grid_cells(domain: &Domain, dx: f64) -> Result<Vec<usize>, CliError> {
    positive(dx, "pde.dx")?;
    let Shape::Box { lower, upper } = domain.shape() else {
        return Err(CliError::validation("domain", "the PDE solver needs a box domain"));
    };
    check(lower.len() <= 2, "domain", || {
        format!("the PDE solver handles d <= 2 (got d = {})", lower.len())
    })?;
    lower
        .iter()
        .zip(upper)
        .map(|(l, u)| {
            let w = u - l;
            let n = (w / dx).round();
            check(n >= 4.0 && n <= 1e5, "pde.dx", || format!("gives {} cells across a side", w / dx))?;
            check((n * dx - w).abs() <= 1e-9 * w, "pde.dx", || {
                format!("side length {w} is not a whole number of cells of size {dx}")
            })?;
            Ok(n as usize)
        })
        .collect()
}

fn pde_job(
    sec: &PdeSection,
    target: &TargetFunction,
    kernel: Option<&KernelSpec>,
) -> Result<PdeJob, CliError> {
    let domain = target.domain();
    let cells = grid_cells(domain, sec.dx)?;
    positive(sec.dt, "pde.dt")?;
    non_negative(sec.tau, "pde.tau")?;
    positive(sec.horizon, "pde.horizon")?;
    step_count(sec.horizon, sec.dt, "pde.horizon")?;
    check(sec.records >= 1, "pde.records", || "must be >= 1".into())?;
    check(sec.density_every <= sec.records, "pde.density_every", || {
        format!("exceeds the number of records {}", sec.records)
    })?;
    let (variant, kernel, support) = match sec.variant {
        PdeVariantName::Limit => (PdeVariant::LimitDelta0, None, domain.clone()),
        PdeVariantName::Delta => {
            let k = kernel.ok_or_else(|| CliError::validation("pde.variant", "the delta variant needs [kernel]"))?;
            let shrunk = at("kernel.delta", shrink(domain, k.c0(), k.delta()))?;
            (
                PdeVariant::ConvolutionDelta { delta: k.delta() },
                Some(k.clone()),
                shrunk.region().clone(),
            )
        }
    };
    let init = match sec.init {
        InitSection::TruncatedGaussian { sigma } => {
            positive(sigma, "pde.init.sigma")?;
            InitialDensity::TruncatedGaussian { sigma }
        }
        InitSection::Uniform {} => InitialDensity::Uniform,
    };
    let cfg = PdeConfig {
        dt: sec.dt,
        cells: cells.clone(),
        tau: sec.tau,
        horizon: sec.horizon,
        variant,
    };
    at("pde", cfg.validate())?;
    let initial = at("pde.init", initial_density(domain, &cells, init, &support))?;
    Ok(PdeJob {
        cfg,
        initial,
        kernel,
        recording: Recording {
            records: sec.records,
            snapshot_every: sec.density_every,
        },
    })
}

fn sgd_config(sec: &SgdSection, seed: u64) -> Result<SgdConfig, CliError> {
    check(sec.n_neurons >= 1, "sgd.n_neurons", || "must be >= 1".into())?;
    positive(sec.step_size, "sgd.step_size")?;
    positive(sec.horizon, "sgd.horizon")?;
    non_negative(sec.noise_temp, "sgd.noise_temp")?;
    non_negative(sec.label_noise, "sgd.label_noise")?;
    let steps = step_count(sec.horizon, sec.step_size, "sgd.horizon")?;
    check(sec.risk_records >= 1 && sec.risk_records as u64 <= steps, "sgd.risk_records", || {
        format!("must be between 1 and the step count {steps}")
    })?;
    check(sec.snapshot_every <= steps, "sgd.snapshot_every", || {
        format!("exceeds the step count {steps}")
    })?;
    let init = match sec.init {
        InitSection::TruncatedGaussian { sigma } => {
            positive(sigma, "sgd.init.sigma")?;
            InitSpec::TruncatedGaussian { sigma }
        }
        InitSection::Uniform {} => InitSpec::UniformOnShrunken,
    };
    let risk_eval = match sec.risk_eval {
        RiskEvalSection::Auto {} => RiskEval::Auto,
        RiskEvalSection::Grid { step } => {
            positive(step, "sgd.risk_eval.step")?;
            RiskEval::Grid { step }
        }
        RiskEvalSection::MonteCarlo { samples } => {
            check(samples >= 2, "sgd.risk_eval.samples", || "must be >= 2".into())?;
            RiskEval::MonteCarlo { samples }
        }
    };
    let mut cfg = SgdConfig::new(sec.n_neurons, sec.step_size, steps, seed);
    cfg.noise_temp = sec.noise_temp;
    cfg.project = sec.project;
    cfg.init = init;
    cfg.risk_records = sec.risk_records;
    cfg.risk_eval = risk_eval;
    cfg.snapshot_every = sec.snapshot_every;
    at("sgd", cfg.validate())?;
    Ok(cfg)
}

fn truncated_gaussian_grid(domain: &Domain, cells: usize, mean: f64, sigma: f64) -> mfb_core::Result<DensityGrid> {
    let mut g = DensityGrid::from_fn(domain, &[cells], |x| {
        let z = (x[0] - mean) / sigma;
        (-0.5 * z * z).exp()
    })?;
    g.normalize()?;
    Ok(g)
}

impl Plan {
    /// Validates every field and builds the core objects.
    pub fn new(config: ExperimentConfig) -> Result<Self, CliError> {
        let domain = build_domain(&config.domain)?;
        let target = build_target(&config.target, domain)?;
        let d = target.dim();
        let kind = config.experiment;
        let dim_is = |want: usize| {
            check(d == want, "target", || {
                format!("experiment {} needs a {want}-dimensional target (got d = {d})", kind.name())
            })
        };
        let kernel = if kind.sections().contains(&"kernel") {
            Some(build_kernel(&config, d)?)
        } else {
            None
        };
        let job = match kind {
            k if k.is_sgd_vs_pde() => {
                dim_is(if k == ExperimentKind::Sgd2d { 2 } else { 1 })?;
                let kernel = kernel.clone().expect("kernel section resolved");
                let problem = at("kernel.delta", Problem::new(target.clone(), kernel.clone()))?;
                let ssec = config.section("sgd", &config.sgd)?;
                let sgd = sgd_config(ssec, config.seed)?;
                let data = DataSource::Population {
                    label_noise: ssec.label_noise,
                };
                let pde = pde_job(config.section("pde", &config.pde)?, &target, Some(&kernel))?;
                Job::SgdVsPde { problem, sgd, data, pde }
            }
            ExperimentKind::PdeOnly => {
                let pde = pde_job(config.section("pde", &config.pde)?, &target, kernel.as_ref())?;
                Job::PdeOnly { pde }
            }
            ExperimentKind::FeaturesD4 => {
                let f = config.section("features", &config.features)?;
                let kernel = kernel.clone().expect("kernel section resolved");
                at("kernel.delta", shrink(target.domain(), kernel.c0(), kernel.delta()))?;
                check(!f.schemes.is_empty(), "features.schemes", || "must not be empty".into())?;
                let schemes = f
                    .schemes
                    .iter()
                    .map(|s| at("features.schemes", Scheme::parse(s)))
                    .collect::<Result<Vec<_>, _>>()?;
                check(!f.lambdas.is_empty(), "features.lambdas", || "must not be empty".into())?;
                for &l in &f.lambdas {
                    positive(l, "features.lambdas")?;
                }
                check(!f.kmax.is_empty() && f.kmax.iter().all(|&k| k >= 1), "features.kmax", || {
                    "must be a non-empty list of positive step counts".into()
                })?;
                check(f.n_neurons >= 1, "features.n_neurons", || "must be >= 1".into())?;
                check(f.trials >= 1, "features.trials", || "must be >= 1".into())?;
                check(f.test_size >= 1, "features.test_size", || "must be >= 1".into())?;
                positive(f.step_size, "features.step_size")?;
                let holdout = mfb_core::features::holdout_size(f.n_samples);
                check(f.n_samples > holdout, "features.n_samples", || {
                    format!("leaves no training data after a hold-out of {holdout}")
                })?;
                let cfg = FeatureConfig {
                    target: target.clone(),
                    kernel,
                    n_samples: f.n_samples,
                    n_neurons: f.n_neurons,
                    trials: f.trials,
                    schemes,
                    lambdas: f.lambdas.clone(),
                    kmax: f.kmax.clone(),
                    step_size: f.step_size,
                    test_size: f.test_size,
                    seed: config.seed,
                };
                at("features", cfg.validate())?;
                Job::Features { cfg }
            }
            ExperimentKind::ConvexityProbe => {
                dim_is(1)?;
                let p = config.section("probe", &config.probe)?;
                check(p.cells >= 10, "probe.cells", || "must be >= 10".into())?;
                check(p.points >= 2, "probe.points", || "must be >= 2".into())?;
                positive(p.a_sigma, "probe.a_sigma")?;
                positive(p.b_sigma, "probe.b_sigma")?;
                let dom = target.domain();
                check(dom.contains(&[p.a_mean]), "probe.a_mean", || "must lie in the domain".into())?;
                check(dom.contains(&[p.b_mean]), "probe.b_mean", || "must lie in the domain".into())?;
                let rho_a = at("probe", truncated_gaussian_grid(dom, p.cells, p.a_mean, p.a_sigma))?;
                let rho_b = at("probe", truncated_gaussian_grid(dom, p.cells, p.b_mean, p.b_sigma))?;
                Job::Probe {
                    rho_a,
                    rho_b,
                    points: p.points,
                }
            }
            ExperimentKind::ChaosTest => {
                dim_is(1)?;
                let kernel = kernel.clone().expect("kernel section resolved");
                let problem = at("kernel.delta", Problem::new(target.clone(), kernel.clone()))?;
                let ssec = config.section("sgd", &config.sgd)?;
                let psec = config.section("pde", &config.pde)?;
                let chaos = config.section("chaos", &config.chaos)?;
                check(psec.variant == PdeVariantName::Delta, "pde.variant", || {
                    "chaos_test compares against the delta PDE".into()
                })?;
                check(ssec.horizon == psec.horizon, "sgd.horizon", || {
                    format!("must equal pde.horizon = {}", psec.horizon)
                })?;
                check(ssec.noise_temp == psec.tau, "pde.tau", || {
                    format!("must equal sgd.noise_temp = {}", ssec.noise_temp)
                })?;
                check(ssec.init == psec.init, "pde.init", || "must equal sgd.init".into())?;
                check(!chaos.n_values.is_empty() && chaos.n_values.iter().all(|&n| n >= 1), "chaos.n_values", || {
                    "must be a non-empty list of positive neuron counts".into()
                })?;
                check(chaos.seeds >= 1, "chaos.seeds", || "must be >= 1".into())?;
                let mut sgd = sgd_config(ssec, config.seed)?;
                let pde = pde_job(psec, &target, Some(&kernel))?;
                let records = psec.records as u64;
                check(sgd.max_steps % records == 0 && pde.cfg.steps() % records == 0, "pde.records", || {
                    "must divide both the SGD and the PDE step counts".into()
                })?;
                sgd.risk_records = 0;
                sgd.snapshot_every = sgd.max_steps / records;
                let pde = PdeJob {
                    recording: Recording {
                        records: psec.records,
                        snapshot_every: 1,
                    },
                    ..pde
                };
                Job::Chaos {
                    problem,
                    sgd,
                    data: DataSource::Population {
                        label_noise: ssec.label_noise,
                    },
                    pde,
                    n_values: chaos.n_values.clone(),
                    seeds: chaos.seeds,
                }
            }
            _ => unreachable!(),
        };
        Ok(Self {
            config,
            target,
            kernel,
            job,
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        Self::new(ExperimentConfig::from_path(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        Self::new(ExperimentConfig::from_toml_str(text)?)
    }
}

use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::geometry::Domain;
use crate::grid::DensityGrid;
use crate::metrics::{wasserstein_1d, EmpiricalMeasure};
use crate::pde::{initial_density, solve, DriftField, InitialDensity, PdeConfig, PdeSolver, PdeVariant, Recording};
use crate::quadrature::integrate_adaptive;
use crate::target::{ScalarField, TargetFunction, TargetKind};

fn interval() -> Domain {
    Domain::cube(1, 1.0).unwrap()
}

fn problem_1d(kind: TargetKind, delta: f64) -> Problem {
    let t = TargetFunction::new(kind, interval()).unwrap();
    Problem::new(t, KernelSpec::quartic(1, delta).unwrap()).unwrap()
}

struct Zero(usize);
impl ScalarField for Zero {
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, _: &[f64]) -> Vec<f64> {
        vec![0.0; self.0]
    }
    fn hessian(&self, _: &[f64]) -> Vec<f64> {
        vec![0.0; self.0 * self.0]
    }
}

/// `f(x) = K^δ(x − c)` for a fixed kernel.
struct Bump {
    kernel: KernelSpec,
    center: Vec<f64>,
}
impl ScalarField for Bump {
    fn value(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.kernel.eval(&z)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.kernel.grad(&z)
    }
    fn hessian(&self, _: &[f64]) -> Vec<f64> {
        vec![0.0; self.center.len().pow(2)]
    }
    fn concave(&self) -> bool {
        false
    }
}

/// Empirical mean and standard error of each increment component of
/// particle `i`, over `samples` fresh data points with `w` frozen.
fn increment_stats(problem: &Problem, cfg: &SgdConfig, w: &[f64], i: usize, samples: u64) -> (Vec<f64>, Vec<f64>) {
    let d = problem.dim();
    let (mut s1, mut s2) = (vec![0.0; d], vec![0.0; d]);
    for s in 0..samples {
        let mut st = ParticleState::from_weights(d, w.to_vec(), 1_000 + s).unwrap();
        sgd_step(&mut st, cfg, problem, &DataSource::population()).unwrap();
        for a in 0..d {
            let inc = st.weight(i)[a] - w[i * d + a];
            s1[a] += inc;
            s2[a] += inc * inc;
        }
    }
    let m = samples as f64;
    let mean: Vec<f64> = s1.iter().map(|v| v / m).collect();
    let se = s2
        .iter()
        .zip(&mean)
        .map(|(q, mu)| ((q / m - mu * mu) / (m - 1.0)).sqrt())
        .collect();
    (mean, se)
}

/// `−ε ∇Ψ(w_i; ρ̂) = −ε [−ν₀∇(K*f)(w_i) + (1/N) Σ_j ∇U(w_i − w_j)]`.
fn drift_oracle(problem: &Problem, eps: f64, w: &[f64], i: usize) -> Vec<f64> {
    let d = problem.dim();
    let k = &problem.kernel;
    let nu0 = problem.domain().nu0();
    let wi = &w[i * d..(i + 1) * d];
    let target = &problem.target;
    let gv = k.grad_convolve(|y| target.value(y), wi, Some(problem.domain())).unwrap();
    let n = w.len() / d;
    let mut out: Vec<f64> = gv.iter().map(|g| -nu0 * g).collect();
    for wj in w.chunks_exact(d) {
        let z: Vec<f64> = wi.iter().zip(wj).map(|(a, b)| a - b).collect();
        let gu = k.grad_pair_potential(&z, nu0).unwrap();
        for a in 0..d {
            out[a] += gu[a] / n as f64;
        }
    }
    out.iter().map(|v| -eps * v).collect()
}

fn frozen_cfg(n: usize, eps: f64) -> SgdConfig {
    let mut cfg = SgdConfig::new(n, eps, 1, 0);
    cfg.project = false;
    cfg
}

#[test]
fn mean_increment_matches_drift_1d() {
    let p = problem_1d(TargetKind::Exp1D, 0.2);
    let w = [-0.4, -0.25, 0.0, 0.1, 0.45];
    let cfg = frozen_cfg(w.len(), 1e-3);
    for i in [0, 2, 4] {
        let (mean, se) = increment_stats(&p, &cfg, &w, i, 100_000);
        let oracle = drift_oracle(&p, cfg.step_size, &w, i);
        assert!(
            (mean[0] - oracle[0]).abs() < 3.0 * se[0],
            "particle {i}: mean {} oracle {} se {}",
            mean[0],
            oracle[0],
            se[0]
        );
    }
}

#[test]
fn mean_increment_matches_drift_2d() {
    let dom = Domain::cube(2, 1.0).unwrap();
    let t = TargetFunction::new(
        TargetKind::LogSumExp {
            q1: vec![1.0, 0.5],
            q2: vec![-0.5, 1.0],
        },
        dom,
    )
    .unwrap();
    let p = Problem::new(t, KernelSpec::quartic(2, 0.25).unwrap()).unwrap();
    let w = [0.1, 0.0, -0.2, 0.15, 0.3, -0.3];
    let cfg = frozen_cfg(3, 1e-3);
    let (mean, se) = increment_stats(&p, &cfg, &w, 0, 100_000);
    let oracle = drift_oracle(&p, cfg.step_size, &w, 0);
    for a in 0..2 {
        assert!(
            (mean[a] - oracle[a]).abs() < 3.0 * se[a],
            "component {a}: mean {} oracle {} se {}",
            mean[a],
            oracle[a],
            se[a]
        );
    }
}

#[test]
fn update_is_descent_for_population_risk() {
    // E[Δw_i] = −(εN/2) ∂R_N/∂w_i; both sides use the same midpoint rule.
    let p = problem_1d(TargetKind::Exp1D, 0.2);
    let w = vec![-0.5, -0.1, 0.2, 0.35];
    let n = 4;
    let eps = 1e-3;
    let how = RiskEval::Grid { step: 1e-4 };
    let grid = DensityGrid::with_spacing(p.domain(), 1e-4).unwrap();
    let nu0 = p.domain().nu0();
    for i in 0..n {
        let mut expected = 0.0;
        for c in 0..grid.len() {
            let x = grid.center(c)[0];
            let fhat: f64 = w.iter().map(|wj| p.kernel.eval(&[x - wj])).sum::<f64>() / n as f64;
            let z = x - w[i];
            expected -= eps * p.kernel.grad_factor_sq(z * z) * z * (p.target.value(&[x]) - fhat);
        }
        expected *= nu0 * grid.cell_volume();
        let h = 1e-5;
        let (mut up, mut dn) = (w.clone(), w.clone());
        up[i] += h;
        dn[i] -= h;
        let fd = (population_risk(&p, &up, &how).unwrap().risk - population_risk(&p, &dn, &how).unwrap().risk) / (2.0 * h);
        let predicted = -0.5 * eps * n as f64 * fd;
        assert!(
            (expected - predicted).abs() <= 1e-6 * expected.abs().max(1e-9),
            "particle {i}: {expected} vs {predicted}"
        );
        assert!(expected * fd < 0.0);
    }
}

#[test]
fn single_neuron_moves_up_the_smoothed_bump() {
    let delta = 0.2;
    let kernel = KernelSpec::quartic(1, delta).unwrap();
    let field = Bump {
        kernel: kernel.clone(),
        center: vec![0.3],
    };
    let t = TargetFunction::custom(Arc::new(field), interval()).unwrap();
    let p = Problem::new(t, kernel).unwrap();
    let cfg = frozen_cfg(1, 1e-3);
    for w0 in [0.15, 0.25, 0.4] {
        let (mean, se) = increment_stats(&p, &cfg, &[w0], 0, 40_000);
        let slope = p.kernel.grad_convolve(|y| p.target.value(y), &[w0], Some(p.domain())).unwrap()[0];
        assert!(mean[0] * slope > 0.0, "w = {w0}: mean {} slope {slope}", mean[0]);
        assert!(mean[0].abs() > 3.0 * se[0]);
    }
}

#[test]
fn zero_step_and_far_data_leave_weights_unchanged() {
    let p = problem_1d(TargetKind::Exp1D, 0.1);
    let w = vec![-0.3, 0.0, 0.5];
    let mut st = ParticleState::from_weights(1, w.clone(), 5).unwrap();
    let cfg = frozen_cfg(3, 0.0);
    for _ in 0..100 {
        sgd_step(&mut st, &cfg, &p, &DataSource::population()).unwrap();
    }
    assert_eq!(st.weights(), &w[..]);
    assert_eq!(st.step_index(), 100);

    let cfg = frozen_cfg(3, 1e-2);
    let data = DataSource::Resample {
        xs: vec![0.9].into(),
        ys: vec![0.2].into(),
    };
    let mut st = ParticleState::from_weights(1, w.clone(), 5).unwrap();
    sgd_step(&mut st, &cfg, &p, &data).unwrap();
    assert_eq!(st.weights(), &w[..]);
}

#[test]
fn runs_are_deterministic() {
    let p = problem_1d(TargetKind::Exp1D, 0.1);
    let mut cfg = SgdConfig::new(50, 1e-3, 2_000, 17);
    cfg.noise_temp = 1e-3;
    let a = run_sgd(&cfg, &p, &DataSource::population()).unwrap();
    let b = run_sgd(&cfg, &p, &DataSource::population()).unwrap();
    assert_eq!(a.state.weights(), b.state.weights());
    assert_eq!(a.risk, b.risk);
    cfg.seed = 18;
    let c = run_sgd(&cfg, &p, &DataSource::population()).unwrap();
    assert_ne!(a.state.weights(), c.state.weights());
}

#[test]
fn permutation_with_streams_gives_same_trajectory() {
    let p = problem_1d(TargetKind::Exp1D, 0.1);
    // Small ε: at ε = 1e-3, δ = 0.1 the dynamics amplify summation-order
    // rounding exponentially and the comparison becomes meaningless.
    let mut cfg = SgdConfig::new(20, 1e-4, 1_500, 3);
    cfg.noise_temp = 1e-2;
    let a0 = init_particles(&cfg, &p.shrunken).unwrap();
    let perm: Vec<usize> = (0..20).rev().collect();
    let mut b0 = a0.clone();
    b0.permute(&perm).unwrap();
    let data = DataSource::population();
    let a = run_from(a0, &cfg, &p, &data, &[], &mut |_| Ok(())).unwrap();
    let b = run_from(b0, &cfg, &p, &data, &[], &mut |_| Ok(())).unwrap();
    for (i, &q) in perm.iter().enumerate() {
        let diff = (b.state.weight(i)[0] - a.state.weight(q)[0]).abs();
        assert!(diff < 1e-12, "particle {i}: {diff}");
        assert_eq!(b.state.stream_ids()[i], a.state.stream_ids()[q]);
    }
    for (ra, rb) in a.risk.iter().zip(&b.risk) {
        assert!((ra.risk - rb.risk).abs() < 1e-12 * ra.risk.max(1.0));
    }
    assert!(b0_invalid_permutation_rejected());
}

fn b0_invalid_permutation_rejected() -> bool {
    let mut st = ParticleState::from_weights(1, vec![0.0, 0.1, 0.2], 0).unwrap();
    st.permute(&[0, 0, 1]).is_err() && st.permute(&[0, 1]).is_err()
}

#[test]
fn projection_keeps_weights_in_shrunken_domain() {
    let p = problem_1d(TargetKind::Exp1D, 0.2);
    let mut cfg = SgdConfig::new(30, 5e-3, 3_000, 9);
    cfg.noise_temp = 0.05;
    let mut st = init_particles(&cfg, &p.shrunken).unwrap();
    for _ in 0..3_000 {
        sgd_step(&mut st, &cfg, &p, &DataSource::population()).unwrap();
        assert!(st.weights().chunks(1).all(|w| p.shrunken.contains(w)));
    }
}

#[test]
fn huge_step_reports_blowup() {
    let p = problem_1d(TargetKind::Exp1D, 0.1);
    let mut cfg = SgdConfig::new(10, 1e308, 100, 0);
    cfg.project = false;
    cfg.init = InitSpec::UniformOnShrunken;
    let err = run_sgd(&cfg, &p, &DataSource::population()).unwrap_err();
    assert!(matches!(err, Error::NumericalBlowup { .. }), "{err:?}");
}

#[test]
fn population_risk_decreases_over_seeds() {
    let p = problem_1d(TargetKind::Exp1D, 1.0 / 20.0);
    let mut cfg = SgdConfig::new(100, 1e-4, 50_000, 0);
    cfg.risk_records = 1;
    let mut start = Vec::new();
    let mut end = Vec::new();
    for seed in 0..20 {
        cfg.seed = seed;
        let run = run_sgd(&cfg, &p, &DataSource::population()).unwrap();
        assert_eq!(run.risk.len(), 2);
        assert_eq!(run.risk[1].t, 5.0);
        start.push(run.risk[0].risk_normalized);
        end.push(run.risk[1].risk_normalized);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[9] + v[10])
    };
    assert!(median(&mut end) < median(&mut start));
}

#[test]
fn truncated_gaussian_init_has_expected_spread() {
    let sigma = 1.0 / 3.0;
    let sd = crate::geometry::shrink(&interval(), 1.0, 0.0).unwrap();
    let mut cfg = SgdConfig::new(200_000, 1e-3, 0, 11);
    cfg.init = InitSpec::TruncatedGaussian { sigma };
    let st = init_particles(&cfg, &sd).unwrap();
    let w = st.weights();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let sd_emp = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
    let dens = |x: f64| (-0.5 * x * x / (sigma * sigma)).exp();
    let z = integrate_adaptive(dens, -1.0, 1.0, 1e-12).unwrap();
    let m2 = integrate_adaptive(|x| x * x * dens(x), -1.0, 1.0, 1e-12).unwrap();
    let oracle = (m2 / z).sqrt();
    // Closed form σ²(1 − 2aφ(a)/(2Φ(a) − 1)) with a = 3 gives 0.32886.
    assert!((oracle - 0.32886).abs() < 1e-4, "{oracle}");
    assert!((sd_emp - oracle).abs() < 3e-3, "{sd_emp} vs {oracle}");
    assert!(mean.abs() < 3e-3);
}

#[test]
fn init_rejection_failure_is_reported() {
    let sd = crate::geometry::shrink(&interval(), 1.0, 0.0).unwrap();
    let mut cfg = SgdConfig::new(10, 1e-3, 0, 0);
    cfg.init = InitSpec::TruncatedGaussian { sigma: 1e5 };
    let err = init_particles(&cfg, &sd).unwrap_err();
    assert!(matches!(err, Error::InitRejectionFailure { .. }), "{err:?}");
}

#[test]
fn risk_of_bumps_against_zero_target() {
    let kernel = KernelSpec::quartic(1, 0.1).unwrap();
    let t = TargetFunction::custom(Arc::new(Zero(1)), interval()).unwrap();
    let p = Problem::new(t, kernel.clone()).unwrap();
    let w = [0.2; 5];
    let got = population_risk(&p, &w, &RiskEval::Auto).unwrap().risk;
    let r = kernel.radius();
    let oracle = 0.5 * integrate_adaptive(|x| kernel.eval(&[x]).powi(2), -r, r, 1e-12).unwrap();
    assert!((got - oracle).abs() < 1e-5 * oracle, "{got} vs {oracle}");
}

#[test]
fn risk_vanishes_when_target_is_the_network() {
    let kernel = KernelSpec::quartic(1, 0.2).unwrap();
    let w = vec![-0.3, 0.1, 0.4];
    struct Net(KernelSpec, Vec<f64>);
    impl ScalarField for Net {
        fn value(&self, x: &[f64]) -> f64 {
            let s = self.1.iter().map(|w| self.0.eval_sq((x[0] - w).powi(2))).sum::<f64>();
            s / self.1.len() as f64
        }
        fn gradient(&self, _: &[f64]) -> Vec<f64> {
            vec![0.0]
        }
        fn hessian(&self, _: &[f64]) -> Vec<f64> {
            vec![0.0]
        }
    }
    let t = TargetFunction::custom(Arc::new(Net(kernel.clone(), w.clone())), interval()).unwrap();
    let p = Problem::new(t, kernel).unwrap();
    let r = population_risk(&p, &w, &RiskEval::Auto).unwrap();
    assert!(r.risk < 1e-20, "{}", r.risk);
}

#[test]
fn iid_weights_from_target_approach_mollified_risk() {
    let delta = 0.1;
    let p = problem_1d(TargetKind::Exp1DUnitMass, delta);
    let n = 100_000;
    let mut rng = crate::rng::SimRng::new(4);
    let fmax = p.target.value(&[-1.0]);
    let mut w = Vec::with_capacity(n);
    while w.len() < n {
        let x = rng.uniform_in(-1.0, 1.0);
        if rng.uniform() * fmax < p.target.value(&[x]) {
            w.push(x);
        }
    }
    let got = population_risk(&p, &w, &RiskEval::Auto).unwrap().risk;
    let rdelta = crate::pde::mollified_target_risk(&p.target, &p.kernel, 4_000).unwrap();
    // E R_N = R^δ(f) + ν₀/N ∫ Var K^δ(x − w), bounded by ν₀ (K*K)(0) / N.
    let slack = 2.0 * 0.5 * p.kernel.self_convolution(&[0.0]).unwrap() / n as f64;
    assert!((got - rdelta).abs() < slack + 1e-6, "{got} vs {rdelta} (slack {slack})");
}

#[test]
fn monte_carlo_risk_agrees_with_grid() {
    let p = problem_1d(TargetKind::Exp1D, 0.2);
    let w = [-0.5, -0.2, 0.0, 0.3];
    let g = population_risk(&p, &w, &RiskEval::Grid { step: 1e-3 }).unwrap();
    let m = population_risk(&p, &w, &RiskEval::MonteCarlo { samples: 200_000 }).unwrap();
    assert!(m.std_error > 0.0);
    assert!((g.risk - m.risk).abs() < 4.0 * m.std_error, "{} vs {} ± {}", g.risk, m.risk, m.std_error);
    assert!((g.risk_normalized - g.risk / p.target.sq_norm()).abs() < 1e-15);
}

#[test]
fn record_schedule_and_checkpoints() {
    assert_eq!(record_steps(10, 5), vec![0, 2, 4, 6, 8, 10]);
    assert_eq!(record_steps(3, 10), vec![0, 1, 2, 3]);
    let p = problem_1d(TargetKind::Exp1D, 0.1);
    let mut cfg = SgdConfig::new(5, 1e-3, 100, 0);
    cfg.snapshot_every = 25;
    cfg.risk_records = 4;
    let st = init_particles(&cfg, &p.shrunken).unwrap();
    let mut seen = Vec::new();
    let run = run_from(st, &cfg, &p, &DataSource::population(), &[50, 0, 100, 500], &mut |s| {
        seen.push(s.step_index());
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![0, 50, 100]);
    let steps: Vec<u64> = run.snapshots.iter().map(|s| s.step).collect();
    assert_eq!(steps, vec![0, 25, 50, 75, 100]);
    assert_eq!(run.risk.len(), 5);
    assert!((run.risk[4].t - 0.1).abs() < 1e-15);
}

#[test]
fn predict_matches_kernel_average() {
    let k = KernelSpec::quartic(1, 0.2).unwrap();
    let st = ParticleState::from_weights(1, vec![0.0, 0.1], 0).unwrap();
    let f = st.predict(&k, &[0.05]);
    assert!((f - 0.5 * (k.eval(&[0.05]) + k.eval(&[-0.05]))).abs() < 1e-15);
}

/// δ-PDE density snapshots every `1/records` time units up to `t = 1`.
fn delta_pde_snapshots(delta: f64, records: usize, dt: f64) -> (Problem, Vec<DensityGrid>) {
    let p = problem_1d(TargetKind::Exp1D, delta);
    let cells = 200;
    let cfg = PdeConfig {
        dt,
        cells: vec![cells],
        tau: 0.0,
        horizon: 1.0,
        variant: PdeVariant::ConvolutionDelta { delta },
    };
    let rho0 = initial_density(p.domain(), &[cells], InitialDensity::TruncatedGaussian { sigma: 1.0 / 3.0 }, p.shrunken.region()).unwrap();
    let solver = PdeSolver::new(&cfg, &p.target, Some(&p.kernel), rho0).unwrap();
    let run = solve(
        solver,
        &cfg,
        &Recording {
            records,
            snapshot_every: 1,
        },
    )
    .unwrap();
    (p, run.snapshots)
}

#[test]
fn euler_with_zero_field_is_static() {
    let p = problem_1d(TargetKind::Exp1D, 0.1);
    let template = DensityGrid::zeros(p.domain(), &[50]).unwrap();
    let field = DriftField::zero(&template, vec![0.0, 0.5]);
    let cfg = EulerConfig {
        particles: 100,
        step_size: 0.01,
        steps: 100,
        noise_temp: 0.0,
        project: true,
        init: InitSpec::TruncatedGaussian { sigma: 1.0 / 3.0 },
        seed: 2,
        record_steps: vec![50, 100],
    };
    let run = euler_oracle(&cfg, &field, &p.shrunken).unwrap();
    assert_eq!(run.steps, vec![0, 50, 100]);
    assert_eq!(run.positions[0], run.positions[2]);
    // Same seed and count as SGD: identical initial positions.
    let mut sgd = SgdConfig::new(100, 0.01, 0, 2);
    sgd.init = cfg.init.clone();
    assert_eq!(init_particles(&sgd, &p.shrunken).unwrap().weights(), &run.positions[0][..]);
    let mut bad = cfg.clone();
    bad.step_size = 0.03;
    assert!(matches!(euler_oracle(&bad, &field, &p.shrunken), Err(Error::GridMismatch(_))));
}

#[test]
fn euler_tracks_pde_density_and_refines() {
    let (p, snaps) = delta_pde_snapshots(0.1, 50, 1e-4);
    let field = DriftField::from_snapshots(&snaps, &p.kernel, &p.target).unwrap();
    let cfg = EulerConfig {
        particles: 4_000,
        step_size: 0.02,
        steps: 50,
        noise_temp: 0.0,
        project: true,
        init: InitSpec::TruncatedGaussian { sigma: 1.0 / 3.0 },
        seed: 8,
        record_steps: vec![50],
    };
    let run = euler_oracle(&cfg, &field, &p.shrunken).unwrap();
    let w1 = |pos: &Vec<f64>, g: &DensityGrid| wasserstein_1d(&EmpiricalMeasure::new(1, pos.clone()).unwrap(), g, 1).unwrap();
    let first = w1(&run.positions[0], &snaps[0]);
    let last = w1(&run.positions[1], snaps.last().unwrap());
    assert!(last <= first + 1e-2, "W1 at t=0 {first}, at t=1 {last}");

    // Coupled runs at ε, ε/2, ε/4 against ε/8 shrink their gap.
    let mut finals = Vec::new();
    for eps in [0.02, 0.01, 0.005, 0.0025] {
        let mut c = cfg.clone();
        c.particles = 300;
        c.step_size = eps;
        c.steps = (1.0 / eps).round() as u64;
        c.record_steps = vec![c.steps];
        finals.push(euler_oracle(&c, &field, &p.shrunken).unwrap().positions.pop().unwrap());
    }
    let gap = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let reference = finals.last().unwrap();
    let gaps: Vec<f64> = finals[..3].iter().map(|f| gap(f, reference)).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn step_moves_only_covering_particles(
        x in -1.0f64..1.0,
        y in -1.0f64..2.0,
        ws in prop::collection::vec(-0.8f64..0.8, 1..12),
    ) {
        let p = problem_1d(TargetKind::Exp1D, 0.1);
        let cfg = frozen_cfg(ws.len(), 1e-3);
        let data = DataSource::Resample { xs: vec![x].into(), ys: vec![y].into() };
        let mut st = ParticleState::from_weights(1, ws.clone(), 0).unwrap();
        sgd_step(&mut st, &cfg, &p, &data).unwrap();
        for (i, w0) in ws.iter().enumerate() {
            if (x - w0).abs() >= p.kernel.radius() {
                prop_assert_eq!(st.weight(i)[0], *w0);
            }
        }
    }

    #[test]
    fn risk_is_permutation_invariant(ws in prop::collection::vec(-0.8f64..0.8, 2..10), k in 0usize..10) {
        let p = problem_1d(TargetKind::Exp1D, 0.2);
        let mut rotated = ws.clone();
        let shift = k % ws.len();
        rotated.rotate_left(shift);
        let a = population_risk(&p, &ws, &RiskEval::Auto).unwrap().risk;
        let b = population_risk(&p, &rotated, &RiskEval::Auto).unwrap().risk;
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(a >= 0.0);
    }
}


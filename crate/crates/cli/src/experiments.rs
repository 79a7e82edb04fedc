//! Executing validated plans and rendering their results.

use rayon::prelude::*;

use mfb_core::features::{compare_schemes, summarize, FeatureRow};
use mfb_core::metrics::kde_of_particles;
use mfb_core::particle_sgd::{run_sgd, SgdRun};
use mfb_core::pde::{displacement_convexity_probe, ConvexityReport, PdeRun};
use mfb_core::{wasserstein_1d, DensityGrid, EmpiricalMeasure, TargetFunction};

use crate::error::CliError;
use crate::output::{Cell, Csv};
use crate::plan::{derive_seed, Job, Plan};

/// `W₁` between SGD particles and the PDE density at one recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosPoint {
    pub n_neurons: usize,
    pub t: f64,
    /// One value per seed.
    pub w1: Vec<f64>,
    pub median: f64,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    SgdVsPde { sgd: SgdRun, pde: PdeRun },
    PdeOnly { pde: PdeRun },
    Features { rows: Vec<FeatureRow> },
    Probe { report: ConvexityReport },
    Chaos { pde: PdeRun, points: Vec<ChaosPoint> },
}

/// Final values of one output series, for sweeps and manifests.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SummaryRow {
    pub series: String,
    pub t: Option<f64>,
    pub risk: Option<f64>,
    pub risk_normalized: Option<f64>,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn ensure_finite(what: &str, xs: impl IntoIterator<Item = f64>) -> Result<(), CliError> {
    match xs.into_iter().find(|x| !x.is_finite()) {
        Some(x) => Err(CliError::runtime(format!("non-finite value {x} in {what}"))),
        None => Ok(()),
    }
}

impl Plan {
    /// Runs the experiment in memory.
    pub fn execute(&self) -> Result<Outcome, CliError> {
        let outcome = match &self.job {
            Job::SgdVsPde { problem, sgd, data, pde } => {
                let (s, p) = rayon::join(|| run_sgd(sgd, problem, data), || pde.run(&self.target));
                Outcome::SgdVsPde { sgd: s?, pde: p? }
            }
            Job::PdeOnly { pde } => Outcome::PdeOnly {
                pde: pde.run(&self.target)?,
            },
            Job::Features { cfg } => Outcome::Features {
                rows: compare_schemes(cfg)?,
            },
            Job::Probe { rho_a, rho_b, points } => Outcome::Probe {
                report: displacement_convexity_probe(&self.target, rho_a, rho_b, *points)?,
            },
            Job::Chaos {
                problem,
                sgd,
                data,
                pde,
                n_values,
                seeds,
            } => {
                let pde_run = pde.run(&self.target)?;
                let jobs: Vec<(usize, usize)> = n_values
                    .iter()
                    .flat_map(|&n| (0..*seeds).map(move |j| (n, j)))
                    .collect();
                let curves = jobs
                    .par_iter()
                    .map(|&(n, j)| {
                        let mut cfg = sgd.clone();
                        cfg.n_neurons = n;
                        cfg.seed = derive_seed(self.config.seed, ((n as u64) << 16) | j as u64);
                        let run = run_sgd(&cfg, problem, data)?;
                        w1_curve(&run, &pde_run.snapshots, cfg.step_size)
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                let mut points = Vec::new();
                for (a, &n) in n_values.iter().enumerate() {
                    let per_seed = &curves[a * seeds..(a + 1) * seeds];
                    for (k, snap) in pde_run.snapshots.iter().enumerate() {
                        let w1: Vec<f64> = per_seed.iter().map(|c| c[k]).collect();
                        points.push(ChaosPoint {
                            n_neurons: n,
                            t: snap.time(),
                            median: median(&w1),
                            w1,
                        });
                    }
                }
                Outcome::Chaos { pde: pde_run, points }
            }
        };
        outcome.check_finite()?;
        Ok(outcome)
    }
}

fn w1_curve(run: &SgdRun, snapshots: &[DensityGrid], eps: f64) -> Result<Vec<f64>, CliError> {
    if run.snapshots.len() != snapshots.len() {
        return Err(CliError::runtime(format!(
            "{} SGD snapshots but {} PDE snapshots",
            run.snapshots.len(),
            snapshots.len()
        )));
    }
    run.snapshots
        .iter()
        .zip(snapshots)
        .map(|(s, g)| {
            let t = s.step as f64 * eps;
            if (t - g.time()).abs() > 1e-9 * t.max(1.0) {
                return Err(CliError::runtime(format!("SGD time {t} does not match PDE time {}", g.time())));
            }
            let emp = EmpiricalMeasure::new(1, s.weights.clone())?;
            Ok(wasserstein_1d(&emp, g, 1)?)
        })
        .collect()
}

impl Outcome {
    fn check_finite(&self) -> Result<(), CliError> {
        let pde_check = |p: &PdeRun| {
            ensure_finite(
                "the PDE records",
                p.records
                    .iter()
                    .flat_map(|r| [r.t, r.risk, r.risk_normalized, r.free_energy, r.entropy, r.mass]),
            )
        };
        match self {
            Outcome::SgdVsPde { sgd, pde } => {
                ensure_finite("the SGD risk", sgd.risk.iter().flat_map(|r| [r.risk, r.risk_normalized]))?;
                pde_check(pde)
            }
            Outcome::PdeOnly { pde } => pde_check(pde),
            Outcome::Features { rows } => ensure_finite("the test risks", rows.iter().map(|r| r.test_risk_normalized)),
            Outcome::Probe { report } => {
                ensure_finite("the probe", report.risk.iter().chain(&report.gap).chain(&report.bound).copied())
            }
            Outcome::Chaos { pde, points } => {
                pde_check(pde)?;
                ensure_finite("the W1 distances", points.iter().flat_map(|p| p.w1.iter().copied()))
            }
        }
    }

    /// Final values of each series.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let pde_row = |p: &PdeRun| {
            let r = p.records.last().expect("a PDE run records t = 0");
            SummaryRow {
                series: "pde".into(),
                t: Some(r.t),
                risk: Some(r.risk),
                risk_normalized: Some(r.risk_normalized),
            }
        };
        match self {
            Outcome::SgdVsPde { sgd, pde } => {
                let mut rows = Vec::new();
                if let Some(r) = sgd.risk.last() {
                    rows.push(SummaryRow {
                        series: "sgd".into(),
                        t: Some(r.t),
                        risk: Some(r.risk),
                        risk_normalized: Some(r.risk_normalized),
                    });
                }
                rows.push(pde_row(pde));
                rows
            }
            Outcome::PdeOnly { pde } => vec![pde_row(pde)],
            Outcome::Features { rows } => summarize(rows)
                .into_iter()
                .map(|s| SummaryRow {
                    series: s.scheme.name().into(),
                    t: None,
                    risk: None,
                    risk_normalized: Some(s.mean),
                })
                .collect(),
            Outcome::Probe { report } => vec![SummaryRow {
                series: "convexity_margin".into(),
                t: None,
                risk: Some(report.min_margin),
                risk_normalized: None,
            }],
            Outcome::Chaos { pde, points } => {
                let t_end = points.iter().map(|p| p.t).fold(f64::NEG_INFINITY, f64::max);
                let mut rows: Vec<SummaryRow> = points
                    .iter()
                    .filter(|p| p.t == t_end)
                    .map(|p| SummaryRow {
                        series: format!("w1_n{}", p.n_neurons),
                        t: Some(p.t),
                        risk: Some(p.median),
                        risk_normalized: None,
                    })
                    .collect();
                rows.push(pde_row(pde));
                rows
            }
        }
    }

    /// The CSV files of this outcome.
    pub fn tables(&self, plan: &Plan) -> Result<Vec<Csv>, CliError> {
        let mut out = Vec::new();
        match self {
            Outcome::SgdVsPde { sgd, pde } => {
                out.push(sgd_risk_table(sgd)?);
                out.push(pde_risk_table(pde)?);
                if !pde.snapshots.is_empty() {
                    out.push(density_table(&pde.snapshots)?);
                }
                if !sgd.snapshots.is_empty() {
                    out.push(snapshot_table(sgd, plan.target.dim())?);
                    out.push(fhat_table(plan, sgd, &pde.final_grid)?);
                }
                out.push(target_table(&plan.target, &pde.final_grid)?);
            }
            Outcome::PdeOnly { pde } => {
                out.push(pde_risk_table(pde)?);
                if !pde.snapshots.is_empty() {
                    out.push(density_table(&pde.snapshots)?);
                }
                out.push(target_table(&plan.target, &pde.final_grid)?);
            }
            Outcome::Features { rows } => {
                let mut t = Csv::new(
                    "features.csv",
                    &["scheme", "n", "N", "trial", "lambda", "kmax", "test_risk_normalized"],
                );
                for r in rows {
                    t.push(vec![
                        r.scheme.name().into(),
                        r.n_samples.into(),
                        r.n_neurons.into(),
                        r.trial.into(),
                        r.lambda.into(),
                        r.kmax.into(),
                        r.test_risk_normalized.into(),
                    ])?;
                }
                out.push(t);
                let mut s = Csv::new("features_summary.csv", &["scheme", "n", "N", "trials", "mean", "std_dev"]);
                for r in summarize(rows) {
                    s.push(vec![
                        r.scheme.name().into(),
                        r.n_samples.into(),
                        r.n_neurons.into(),
                        r.trials.into(),
                        r.mean.into(),
                        r.std_dev.into(),
                    ])?;
                }
                out.push(s);
            }
            Outcome::Probe { report } => {
                let mut t = Csv::new("probe.csv", &["t", "risk", "gap", "bound"]);
                for k in 0..report.ts.len() {
                    t.push(vec![
                        report.ts[k].into(),
                        report.risk[k].into(),
                        report.gap[k].into(),
                        report.bound[k].into(),
                    ])?;
                }
                out.push(t);
            }
            Outcome::Chaos { pde, points } => {
                let mut t = Csv::new("w1_vs_t.csv", &["N", "t", "w1_empirical_vs_pde"]);
                let mut s = Csv::new("w1_per_seed.csv", &["N", "seed_index", "t", "w1"]);
                for p in points {
                    t.push(vec![p.n_neurons.into(), p.t.into(), p.median.into()])?;
                    for (j, w) in p.w1.iter().enumerate() {
                        s.push(vec![p.n_neurons.into(), j.into(), p.t.into(), (*w).into()])?;
                    }
                }
                out.push(t);
                out.push(s);
                out.push(pde_risk_table(pde)?);
                out.push(density_table(&pde.snapshots)?);
            }
        }
        Ok(out)
    }
}

fn coord_header(d: usize, prefix: &[&str], suffix: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    h.extend((1..=d).map(|a| format!("x_{a}")));
    h.extend(suffix.iter().map(|s| s.to_string()));
    h
}

fn csv_with(name: &str, header: &[String]) -> Csv {
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    Csv::new(name, &h)
}

fn sgd_risk_table(sgd: &SgdRun) -> Result<Csv, CliError> {
    let mut t = Csv::new("risk_sgd.csv", &["step", "t", "risk", "risk_normalized"]);
    for r in &sgd.risk {
        t.push(vec![r.step.into(), r.t.into(), r.risk.into(), r.risk_normalized.into()])?;
    }
    Ok(t)
}

fn pde_risk_table(pde: &PdeRun) -> Result<Csv, CliError> {
    let mut t = Csv::new(
        "risk_pde.csv",
        &["t", "risk", "risk_normalized", "free_energy", "entropy", "mass"],
    );
    for r in &pde.records {
        t.push(vec![
            r.t.into(),
            r.risk.into(),
            r.risk_normalized.into(),
            r.free_energy.into(),
            r.entropy.into(),
            r.mass.into(),
        ])?;
    }
    Ok(t)
}

/// Long-format table `t, x_1[, x_2], value` over a list of grids.
fn grid_rows(t: &mut Csv, grids: &[(Vec<Cell>, &DensityGrid)]) -> Result<(), CliError> {
    for (lead, g) in grids {
        for c in 0..g.len() {
            let mut row = lead.clone();
            row.extend(g.center(c).into_iter().map(Cell::from));
            row.push(g.values()[c].into());
            t.push(row)?;
        }
    }
    Ok(())
}

fn density_table(snapshots: &[DensityGrid]) -> Result<Csv, CliError> {
    let d = snapshots[0].dim();
    let mut t = csv_with("density_pde.csv", &coord_header(d, &["t"], &["rho"]));
    let grids: Vec<_> = snapshots.iter().map(|g| (vec![g.time().into()], g)).collect();
    grid_rows(&mut t, &grids)?;
    Ok(t)
}

fn snapshot_table(sgd: &SgdRun, d: usize) -> Result<Csv, CliError> {
    let mut header = vec!["step".to_string(), "particle_id".to_string()];
    header.extend((1..=d).map(|a| format!("w_{a}")));
    let mut t = csv_with("snapshots.csv", &header);
    for s in &sgd.snapshots {
        for (i, w) in s.weights.chunks_exact(d).enumerate() {
            let mut row: Vec<Cell> = vec![s.step.into(), i.into()];
            row.extend(w.iter().map(|&v| Cell::from(v)));
            t.push(row)?;
        }
    }
    Ok(t)
}

/// The network output `f̂(·; w)` at every snapshot, on the PDE grid.
fn fhat_table(plan: &Plan, sgd: &SgdRun, template: &DensityGrid) -> Result<Csv, CliError> {
    let d = plan.target.dim();
    let kernel = plan.kernel.as_ref().expect("SGD experiments carry a kernel");
    let eps = match &plan.job {
        Job::SgdVsPde { sgd, .. } => sgd.step_size,
        _ => unreachable!(),
    };
    let mut t = csv_with("fhat_sgd.csv", &coord_header(d, &["step", "t"], &["fhat"]));
    let mut grids = Vec::new();
    for s in &sgd.snapshots {
        let emp = EmpiricalMeasure::new(d, s.weights.clone())?;
        let g = kde_of_particles(&emp, kernel, template)?;
        grids.push((s.step, g));
    }
    let rows: Vec<_> = grids
        .iter()
        .map(|(step, g)| (vec![Cell::from(*step), Cell::from(*step as f64 * eps)], g))
        .collect();
    grid_rows(&mut t, &rows)?;
    Ok(t)
}

fn target_table(target: &TargetFunction, template: &DensityGrid) -> Result<Csv, CliError> {
    let d = target.dim();
    let g = DensityGrid::from_fn(template.domain(), template.cells(), |x| target.value(x))?;
    let mut t = csv_with("target.csv", &coord_header(d, &[], &["f"]));
    grid_rows(&mut t, &[(Vec::new(), &g)])?;
    Ok(t)
}

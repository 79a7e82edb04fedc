//! `run` and `sweep`: executing plans and writing their artifacts.

use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::experiments::{Outcome, SummaryRow};
use crate::manifest::{derived_constants, Manifest};
use crate::output::{sha256_hex, write_atomic, Cell, Csv};
use crate::plan::{derive_seed, Plan};

/// Result of one completed run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub outcome: Outcome,
    pub summary: Vec<SummaryRow>,
    /// `(file name, sha256)` of every CSV written.
    pub files: Vec<(String, String)>,
}

/// Executes `plan`, writing CSVs and `manifest.json` into `dir`.
pub fn run_plan(plan: &Plan, dir: &Path) -> Result<RunReport, CliError> {
    let derived = derived_constants(plan).map_err(|e| match e {
        CliError::Runtime { message } => CliError::validation("target", message),
        v => v,
    })?;
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut manifest = Manifest::start(plan, &derived);
    manifest.write(dir)?;
    info!("{}: running in {}", plan.config.experiment.name(), dir.display());
    let result = (|| {
        let outcome = plan.execute()?;
        let tables = outcome.tables(plan)?;
        let mut files = Vec::new();
        for t in &tables {
            write_atomic(&dir.join(t.name()), t.text().as_bytes())?;
            let sum = sha256_hex(t.text().as_bytes());
            manifest.record_output(t.name(), &sum, t.text().len());
            files.push((t.name().to_string(), sum));
        }
        Ok((outcome, files))
    })();
    match result {
        Ok((outcome, files)) => {
            let summary = outcome.summary();
            manifest.finish(&summary);
            manifest.write(dir)?;
            Ok(RunReport {
                output_dir: dir.to_path_buf(),
                outcome,
                summary,
                files,
            })
        }
        Err(e) => {
            manifest.fail(&e);
            manifest.write(dir)?;
            Err(e)
        }
    }
}

/// `mfb run`: the config's own output directory unless overridden.
pub fn run_config(path: &Path, output_dir: Option<&Path>) -> Result<RunReport, CliError> {
    let plan = Plan::from_path(path)?;
    let dir = output_dir.map_or_else(|| PathBuf::from(&plan.config.output_dir), Path::to_path_buf);
    run_plan(&plan, &dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Delta,
    N,
    SampleSize,
    Epsilon,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "delta" => Ok(SweepAxis::Delta),
            "N" => Ok(SweepAxis::N),
            "n" => Ok(SweepAxis::SampleSize),
            "epsilon" => Ok(SweepAxis::Epsilon),
            _ => Err(CliError::validation("--axis", format!("unknown axis {s:?}; expected delta, N, n or epsilon"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Delta => "delta",
            SweepAxis::N => "N",
            SweepAxis::SampleSize => "n",
            SweepAxis::Epsilon => "epsilon",
        }
    }

    /// A copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, CliError> {
        let mut c = base.clone();
        let kind = c.experiment;
        let unsupported = || {
            CliError::validation(
                "--axis",
                format!("axis {} does not apply to experiment {}", self.name(), kind.name()),
            )
        };
        let count = |v: f64| -> Result<usize, CliError> {
            if v >= 1.0 && v.fract() == 0.0 && v <= 1e9 {
                Ok(v as usize)
            } else {
                Err(CliError::validation("--values", format!("{v} is not a positive integer")))
            }
        };
        match self {
            SweepAxis::Delta => {
                let uses_kernel = match kind {
                    ExperimentKind::PdeOnly => c.pde.as_ref().is_some_and(|p| p.variant == crate::config::PdeVariantName::Delta),
                    ExperimentKind::ConvexityProbe => false,
                    _ => true,
                };
                match c.kernel.as_mut() {
                    Some(k) if uses_kernel => k.delta = value,
                    _ => return Err(unsupported()),
                }
            }
            SweepAxis::N => {
                let n = count(value)?;
                match kind {
                    ExperimentKind::FeaturesD4 => c.features.as_mut().ok_or_else(unsupported)?.n_neurons = n,
                    k if k.is_sgd_vs_pde() => c.sgd.as_mut().ok_or_else(unsupported)?.n_neurons = n,
                    _ => return Err(unsupported()),
                }
            }
            SweepAxis::SampleSize => {
                let n = count(value)?;
                match kind {
                    ExperimentKind::FeaturesD4 => c.features.as_mut().ok_or_else(unsupported)?.n_samples = n,
                    _ => return Err(unsupported()),
                }
            }
            SweepAxis::Epsilon => match kind {
                ExperimentKind::FeaturesD4 => c.features.as_mut().ok_or_else(unsupported)?.step_size = value,
                k if k.is_sgd_vs_pde() || k == ExperimentKind::ChaosTest => {
                    c.sgd.as_mut().ok_or_else(unsupported)?.step_size = value
                }
                _ => return Err(unsupported()),
            },
        }
        Ok(c)
    }
}

/// Parses `0.2,0.1,1/20`-style lists.
pub fn parse_values(s: &str) -> Result<Vec<f64>, CliError> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::validation("--values", "the list of values is empty"));
    }
    items
        .iter()
        .map(|p| {
            let v = match p.split_once('/') {
                Some((a, b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()).map(|(a, b)| a / b),
                None => p.parse::<f64>().ok(),
            };
            v.filter(|x| x.is_finite())
                .ok_or_else(|| CliError::validation("--values", format!("cannot parse {p:?} as a number")))
        })
        .collect()
}

/// One sweep point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub seed: u64,
    pub dir: PathBuf,
    pub result: Result<Vec<SummaryRow>, CliError>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub table: PathBuf,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    /// 0 when every point succeeded, otherwise the largest failure code.
    pub fn exit_code(&self) -> i32 {
        self.points
            .iter()
            .filter_map(|p| p.result.as_ref().err().map(CliError::exit_code))
            .max()
            .unwrap_or(0)
    }
}

/// Runs `base` once per value, in parallel, and aggregates the final
/// values into `<dir>/sweep_<axis>.csv`. Each point runs in its own
/// subdirectory with a seed derived from the base seed and the value.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64], dir: &Path) -> Result<SweepReport, CliError> {
    if values.is_empty() {
        return Err(CliError::validation("--values", "the list of values is empty"));
    }
    Plan::new(base.clone())?;
    for &v in values {
        axis.apply(base, v)?;
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let points: Vec<SweepPoint> = values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let seed = derive_seed(base.seed, value.to_bits());
            let sub = dir.join(format!("{}_{i:02}", axis.name()));
            let result = axis.apply(base, value).and_then(|mut c| {
                c.seed = seed;
                c.output_dir = sub.display().to_string();
                let plan = Plan::new(c)?;
                run_plan(&plan, &sub).map(|r| r.summary)
            });
            SweepPoint {
                value,
                seed,
                dir: sub,
                result,
            }
        })
        .collect();
    let mut t = Csv::new(
        &format!("sweep_{}.csv", axis.name()),
        &[axis.name(), "seed", "series", "t", "risk", "risk_normalized", "status", "failure"],
    );
    for p in &points {
        match &p.result {
            Ok(rows) => {
                for r in rows {
                    t.push(vec![
                        p.value.into(),
                        p.seed.into(),
                        r.series.clone().into(),
                        r.t.into(),
                        r.risk.into(),
                        r.risk_normalized.into(),
                        "ok".into(),
                        Cell::Empty,
                    ])?;
                }
            }
            Err(e) => t.push(vec![
                p.value.into(),
                p.seed.into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                "failed".into(),
                e.to_string().into(),
            ])?,
        }
    }
    let table = dir.join(t.name());
    write_atomic(&table, t.text().as_bytes())?;
    let index = json!({
        "axis": axis.name(),
        "values": values,
        "base_config_toml": base.to_toml_string(),
        "table": t.name(),
        "table_sha256": sha256_hex(t.text().as_bytes()),
        "points": points.iter().map(|p| json!({
            "value": p.value,
            "seed": p.seed,
            "dir": p.dir.file_name().map(|f| f.to_string_lossy().into_owned()),
            "status": if p.result.is_ok() { "ok" } else { "failed" },
        })).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&index).expect("sweep index serializes");
    text.push('\n');
    write_atomic(&dir.join(format!("sweep_{}.json", axis.name())), text.as_bytes())?;
    Ok(SweepReport { table, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_parse_with_fractions() {
        assert_eq!(parse_values("0.2, 1/10,0.05").unwrap(), vec![0.2, 0.1, 0.05]);
        assert_eq!(parse_values("").unwrap_err().exit_code(), 2);
        assert_eq!(parse_values(" , ").unwrap_err().exit_code(), 2);
        assert_eq!(parse_values("1,x").unwrap_err().key(), Some("--values"));
    }

    #[test]
    fn axes_set_the_right_fields() {
        let base = ExperimentConfig::from_toml_str("experiment = \"features_d4\"").unwrap();
        let c = SweepAxis::SampleSize.apply(&base, 500.0).unwrap();
        assert_eq!(c.features.unwrap().n_samples, 500);
        assert!(SweepAxis::SampleSize.apply(&base, 2.5).is_err());
        let base = ExperimentConfig::from_toml_str("experiment = \"sgd_vs_pde_1d\"").unwrap();
        assert_eq!(SweepAxis::Delta.apply(&base, 0.1).unwrap().kernel.unwrap().delta, 0.1);
        assert_eq!(SweepAxis::N.apply(&base, 20.0).unwrap().sgd.unwrap().n_neurons, 20);
        assert!(SweepAxis::SampleSize.apply(&base, 20.0).is_err());
        let base = ExperimentConfig::from_toml_str("experiment = \"pde_only\"").unwrap();
        assert!(SweepAxis::Delta.apply(&base, 0.1).is_err());
    }
}

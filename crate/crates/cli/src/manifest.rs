//! Run manifests: written when a run starts, finalized when it ends.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use mfb_core::kernel::normalization;
use mfb_core::{shrink, Error as CoreError, Profile};

use crate::error::CliError;
use crate::experiments::SummaryRow;
use crate::output::write_atomic;
use crate::plan::Plan;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Constants the run depends on, computed from the config alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub dim: usize,
    /// Kernel normalization `C_d`.
    pub c_d: f64,
    /// Concavity modulus `α`; negative when the target is not concave.
    pub alpha: Option<f64>,
    pub concave: Option<bool>,
    pub alpha_grid_step: f64,
    pub delta: Option<f64>,
    pub lambda_delta: Option<f64>,
    pub f_sq_norm: f64,
    pub nu0: f64,
    pub target_c1: f64,
    pub target_c2: f64,
}

fn alpha_grid_step(d: usize) -> f64 {
    match d {
        1 => 1e-3,
        2 => 1e-2,
        3 => 5e-2,
        _ => 1e-1,
    }
}

pub fn derived_constants(plan: &Plan) -> Result<DerivedConstants, CliError> {
    let t = &plan.target;
    let d = t.dim();
    let c_d = match &plan.kernel {
        Some(k) => k.norm_const(),
        None => normalization(d, &Profile::PaperQuartic)?,
    };
    let step = alpha_grid_step(d);
    let (alpha, concave) = match t.concavity_alpha(step) {
        Ok(a) => (Some(a), Some(true)),
        Err(CoreError::NotConcave { min_eigenvalue }) => (Some(min_eigenvalue), Some(false)),
        Err(_) => (None, None),
    };
    let lambda_delta = match &plan.kernel {
        Some(k) => Some(shrink(t.domain(), k.c0(), k.delta())?.lambda_delta()),
        None => None,
    };
    Ok(DerivedConstants {
        dim: d,
        c_d,
        alpha,
        concave,
        alpha_grid_step: step,
        delta: plan.kernel.as_ref().map(|k| k.delta()),
        lambda_delta,
        f_sq_norm: t.sq_norm(),
        nu0: t.domain().nu0(),
        target_c1: t.c1(),
        target_c2: t.c2(),
    })
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Manifest of one run in progress.
#[derive(Debug)]
pub struct Manifest {
    body: Value,
    clock: Instant,
}

impl Manifest {
    pub fn start(plan: &Plan, derived: &DerivedConstants) -> Self {
        let body = json!({
            "status": "running",
            "experiment": plan.config.experiment.name(),
            "seed": plan.config.seed,
            "config": plan.config,
            "config_toml": plan.config.to_toml_string(),
            "derived": derived,
            "versions": {
                "mfb-cli": env!("CARGO_PKG_VERSION"),
                "mfb-core": mfb_core::VERSION,
            },
            "threads": rayon::current_num_threads(),
            "started_unix": unix_seconds(),
            "finished_unix": null,
            "wall_clock_seconds": null,
            "outputs": {},
            "summary": [],
            "error": null,
        });
        Self {
            body,
            clock: Instant::now(),
        }
    }

    pub fn record_output(&mut self, name: &str, sha256: &str, bytes: usize) {
        self.body["outputs"][name] = json!({ "sha256": sha256, "bytes": bytes });
    }

    pub fn finish(&mut self, summary: &[SummaryRow]) {
        self.close("ok");
        self.body["summary"] = json!(summary);
    }

    pub fn fail(&mut self, error: &CliError) {
        self.close("failed");
        self.body["error"] = serde_json::from_str(&error.to_json()).expect("error JSON is valid");
    }

    fn close(&mut self, status: &str) {
        self.body["status"] = json!(status);
        self.body["finished_unix"] = json!(unix_seconds());
        self.body["wall_clock_seconds"] = json!(self.clock.elapsed().as_secs_f64());
    }

    pub fn body(&self) -> &Value {
        &self.body
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(&self.body).expect("manifest serializes");
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_NAME), text.as_bytes())
    }
}

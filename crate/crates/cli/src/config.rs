//! Experiment configuration files.
//!
//! A config is a TOML document. Every experiment kind has a table of
//! defaults; the user's file is merged over it section by section, and the
//! merged document is deserialized with unknown keys rejected. The merged
//! document is the resolved config recorded in the manifest, so it alone
//! re-specifies a run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "sgd_vs_pde_1d")]
    SgdVsPde1d,
    #[serde(rename = "pde_only")]
    PdeOnly,
    #[serde(rename = "sgd_2d")]
    Sgd2d,
    #[serde(rename = "features_d4")]
    FeaturesD4,
    #[serde(rename = "nonconcave_1d")]
    Nonconcave1d,
    #[serde(rename = "small_n")]
    SmallN,
    #[serde(rename = "convexity_probe")]
    ConvexityProbe,
    #[serde(rename = "chaos_test")]
    ChaosTest,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::SgdVsPde1d,
        ExperimentKind::PdeOnly,
        ExperimentKind::Sgd2d,
        ExperimentKind::FeaturesD4,
        ExperimentKind::Nonconcave1d,
        ExperimentKind::SmallN,
        ExperimentKind::ConvexityProbe,
        ExperimentKind::ChaosTest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SgdVsPde1d => "sgd_vs_pde_1d",
            ExperimentKind::PdeOnly => "pde_only",
            ExperimentKind::Sgd2d => "sgd_2d",
            ExperimentKind::FeaturesD4 => "features_d4",
            ExperimentKind::Nonconcave1d => "nonconcave_1d",
            ExperimentKind::SmallN => "small_n",
            ExperimentKind::ConvexityProbe => "convexity_probe",
            ExperimentKind::ChaosTest => "chaos_test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// SGD compared against a PDE run on the same target.
    pub fn is_sgd_vs_pde(self) -> bool {
        matches!(
            self,
            ExperimentKind::SgdVsPde1d | ExperimentKind::Sgd2d | ExperimentKind::Nonconcave1d | ExperimentKind::SmallN
        )
    }

    /// Optional sections this kind reads.
    pub fn sections(self) -> &'static [&'static str] {
        match self {
            k if k.is_sgd_vs_pde() => &["kernel", "sgd", "pde"],
            ExperimentKind::PdeOnly => &["kernel", "pde"],
            ExperimentKind::FeaturesD4 => &["kernel", "features"],
            ExperimentKind::ConvexityProbe => &["probe"],
            ExperimentKind::ChaosTest => &["kernel", "sgd", "pde", "chaos"],
            _ => unreachable!(),
        }
    }

    fn defaults(self) -> &'static str {
        match self {
            ExperimentKind::SgdVsPde1d => SGD_VS_PDE_1D,
            ExperimentKind::PdeOnly => PDE_ONLY,
            ExperimentKind::Sgd2d => SGD_2D,
            ExperimentKind::FeaturesD4 => FEATURES_D4,
            ExperimentKind::Nonconcave1d => NONCONCAVE_1D,
            ExperimentKind::SmallN => SMALL_N,
            ExperimentKind::ConvexityProbe => CONVEXITY_PROBE,
            ExperimentKind::ChaosTest => CHAOS_TEST,
        }
    }
}

const SGD_1D_SECTIONS: &str = r#"
[kernel]
delta = 0.05
profile = "quartic"

[sgd]
n_neurons = 200
step_size = 1e-6
horizon = 5.0
noise_temp = 0.0
project = false
init = { kind = "truncated_gaussian", sigma = 0.3333333333333333 }
risk_records = 100
risk_eval = { method = "auto" }
snapshot_every = 0
label_noise = 0.0

[pde]
variant = "limit"
dt = 1e-5
dx = 1e-2
tau = 0.0
horizon = 5.0
init = { kind = "truncated_gaussian", sigma = 0.3333333333333333 }
records = 100
density_every = 0
"#;

const SGD_VS_PDE_1D: &str = r#"
seed = 1
output_dir = "out/sgd_vs_pde_1d"

[target]
kind = "exp1d"
"#;

const NONCONCAVE_1D: &str = r#"
seed = 1
output_dir = "out/nonconcave_1d"

[target]
kind = "bimodal1d"
"#;

const SMALL_N: &str = r#"
seed = 1
output_dir = "out/small_n"

[target]
kind = "exp1d"

[sgd]
n_neurons = 20
"#;

const SGD_2D: &str = r#"
seed = 1
output_dir = "out/sgd_2d"

[target]
kind = "log_sum_exp"
q1 = [2.5127, -2.449]
q2 = [0.0596, 1.9908]

[kernel]
delta = 0.1

[sgd]
n_neurons = 2000

[pde]
dx = 2e-2
"#;

const PDE_ONLY: &str = r#"
seed = 1
output_dir = "out/pde_only"

[target]
kind = "exp1d"

[kernel]
delta = 0.05
profile = "quartic"

[pde]
variant = "limit"
dt = 1e-5
dx = 1e-2
tau = 0.0
horizon = 5.0
init = { kind = "truncated_gaussian", sigma = 0.3333333333333333 }
records = 100
density_every = 10
"#;

const FEATURES_D4: &str = r#"
seed = 1
output_dir = "out/features_d4"

[target]
kind = "log_sum_exp"
q1 = [-0.3832, 0.3074, -0.3198, 0.4792]
q2 = [0.3502, -0.1471, 0.1685, 0.0546]

[kernel]
delta = 0.3333333333333333
profile = "quartic"

[features]
n_samples = 2000
n_neurons = 200
trials = 20
schemes = ["random_w", "data_points_w", "optimized_w"]
lambdas = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
kmax = [5000, 15000, 50000, 150000, 500000, 1500000]
step_size = 5e-4
test_size = 10000
"#;

const CONVEXITY_PROBE: &str = r#"
seed = 1
output_dir = "out/convexity_probe"

[target]
kind = "exp1d"

[probe]
cells = 200
points = 21
a_mean = -0.4
a_sigma = 0.15
b_mean = 0.5
b_sigma = 0.25
"#;

const CHAOS_TEST: &str = r#"
seed = 1
output_dir = "out/chaos_test"

[target]
kind = "exp1d"

[kernel]
delta = 0.1

[sgd]
project = true
horizon = 1.0

[pde]
variant = "delta"
horizon = 1.0
records = 10

[chaos]
n_values = [50, 200, 800]
seeds = 5
"#;

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output_dir: String,
    pub domain: DomainSpec,
    pub target: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeaturesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chaos: Option<ChaosSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

// Unit-like variants are written `{}` so that stray keys are still rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    #[serde(rename = "exp1d")]
    Exp1d {},
    #[serde(rename = "exp1d_unit_mass")]
    Exp1dUnitMass {},
    LogSumExp { q1: Vec<f64>, q2: Vec<f64> },
    #[serde(rename = "bimodal1d")]
    Bimodal1d {},
}

impl TargetSpec {
    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::LogSumExp { q1, .. } => q1.len(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Quartic,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub delta: f64,
    pub profile: ProfileName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSection {
    TruncatedGaussian { sigma: f64 },
    Uniform {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskEvalSection {
    Auto {},
    Grid { step: f64 },
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    pub n_neurons: usize,
    pub step_size: f64,
    /// Simulated time `T`; the run takes `T / step_size` steps.
    pub horizon: f64,
    pub noise_temp: f64,
    pub project: bool,
    pub init: InitSection,
    pub risk_records: usize,
    pub risk_eval: RiskEvalSection,
    /// Weight snapshots every this many steps (0: none).
    pub snapshot_every: u64,
    /// Standard deviation of Gaussian label noise.
    pub label_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeVariantName {
    Limit,
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    pub variant: PdeVariantName,
    pub dt: f64,
    pub dx: f64,
    pub tau: f64,
    pub horizon: f64,
    pub init: InitSection,
    pub records: usize,
    /// Density snapshots every this many records (0: none).
    pub density_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    pub n_samples: usize,
    pub n_neurons: usize,
    pub trials: usize,
    pub schemes: Vec<String>,
    pub lambdas: Vec<f64>,
    pub kmax: Vec<u64>,
    pub step_size: f64,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub cells: usize,
    pub points: usize,
    pub a_mean: f64,
    pub a_sigma: f64,
    pub b_mean: f64,
    pub b_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosSection {
    pub n_values: Vec<usize>,
    pub seeds: usize,
}

/// Sections merged key by key; everything else is replaced wholesale.
const MERGED_SECTIONS: [&str; 6] = ["kernel", "sgd", "pde", "features", "probe", "chaos"];

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let user: Table = text.parse().map_err(|e: toml::de::Error| CliError::Validation {
            key: None,
            message: format!("TOML syntax: {}", e.message()),
        })?;
        Self::from_table(user)
    }

    /// Resolves a parsed document against the defaults of its kind.
    pub fn from_table(user: Table) -> Result<Self, CliError> {
        let kind_name = match user.get("experiment") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(CliError::validation("experiment", "must be a string")),
            None => return Err(CliError::validation("experiment", "missing experiment kind")),
        };
        let kind = ExperimentKind::parse(&kind_name).ok_or_else(|| {
            let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
            CliError::validation(
                "experiment",
                format!("unknown kind {kind_name:?}; expected one of {}", names.join(", ")),
            )
        })?;
        for (key, value) in &user {
            if MERGED_SECTIONS.contains(&key.as_str()) {
                if !kind.sections().contains(&key.as_str()) {
                    return Err(CliError::validation(
                        key.clone(),
                        format!("section is not used by experiment {}", kind.name()),
                    ));
                }
                if !value.is_table() {
                    return Err(CliError::validation(key.clone(), "must be a table"));
                }
            }
        }
        let merged = merge(defaults_for(kind), user);
        let config: ExperimentConfig =
            serde_path_to_error::deserialize(Value::Table(merged)).map_err(|e| {
                let inner = e.inner().to_string();
                let mut key = e.path().to_string();
                // internally tagged tables report the table, not the field
                if let Some(field) = backticked(&inner).filter(|_| inner.starts_with("unknown field")) {
                    if !key.ends_with(&field) {
                        key = if key == "." { field } else { format!("{key}.{field}") };
                    }
                }
                CliError::Validation {
                    key: Some(key),
                    message: inner,
                }
            })?;
        Ok(config)
    }

    /// The resolved config as TOML text.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("resolved configs always serialize")
    }

    /// Section accessor for kinds that require it.
    pub fn section<'a, T>(&'a self, name: &str, s: &'a Option<T>) -> Result<&'a T, CliError> {
        s.as_ref().ok_or_else(|| {
            CliError::validation(name, format!("section is required by experiment {}", self.experiment.name()))
        })
    }
}

fn backticked(s: &str) -> Option<String> {
    let start = s.find('`')? + 1;
    let len = s[start..].find('`')?;
    Some(s[start..start + len].to_string())
}

fn defaults_for(kind: ExperimentKind) -> Table {
    let mut base: Table = kind.defaults().parse().expect("builtin defaults parse");
    if matches!(kind, ExperimentKind::ChaosTest) || kind.is_sgd_vs_pde() {
        let shared: Table = SGD_1D_SECTIONS.parse().expect("builtin defaults parse");
        base = merge(shared, base);
    }
    base.insert("experiment".into(), Value::String(kind.name().into()));
    base
}

/// `over` on top of `base`, descending one level into the merged sections.
fn merge(mut base: Table, over: Table) -> Table {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) if MERGED_SECTIONS.contains(&key.as_str()) => {
                for (k, v) in o {
                    b.insert(k, v);
                }
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
    if !base.contains_key("domain") {
        let d = match base.get("target").and_then(|t| t.get("q1")) {
            Some(Value::Array(q)) => q.len().max(1),
            _ => 1,
        };
        let mut domain = Table::new();
        domain.insert("shape".into(), Value::String("box".into()));
        domain.insert("lower".into(), Value::Array(vec![Value::Float(-1.0); d]));
        domain.insert("upper".into(), Value::Array(vec![Value::Float(1.0); d]));
        base.insert("domain".into(), Value::Table(domain));
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_resolves_from_its_name_alone() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::from_toml_str(&format!("experiment = \"{}\"", kind.name())).unwrap();
            assert_eq!(cfg.experiment, kind);
            for s in kind.sections() {
                let present = match *s {
                    "kernel" => cfg.kernel.is_some(),
                    "sgd" => cfg.sgd.is_some(),
                    "pde" => cfg.pde.is_some(),
                    "features" => cfg.features.is_some(),
                    "probe" => cfg.probe.is_some(),
                    "chaos" => cfg.chaos.is_some(),
                    _ => unreachable!(),
                };
                assert!(present, "{} lacks default [{s}]", kind.name());
            }
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::from_toml_str(&format!("experiment = \"{}\"", kind.name())).unwrap();
            let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn user_keys_override_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "experiment = \"small_n\"\nseed = 7\n[kernel]\ndelta = 0.2\n[sgd]\nstep_size = 1e-5\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        let sgd = cfg.sgd.unwrap();
        assert_eq!(sgd.n_neurons, 20);
        assert_eq!(sgd.step_size, 1e-5);
        assert_eq!(cfg.kernel.unwrap().delta, 0.2);
    }

    #[test]
    fn tagged_tables_are_replaced_not_merged() {
        let cfg = ExperimentConfig::from_toml_str(
            "experiment = \"sgd_vs_pde_1d\"\n[sgd]\ninit = { kind = \"uniform\" }\n",
        )
        .unwrap();
        assert_eq!(cfg.sgd.unwrap().init, InitSection::Uniform {});
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = ExperimentConfig::from_toml_str("experiment = \"pde_only\"\n[pde]\nddt = 1.0\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(e.key(), Some("pde.ddt"));
        let e = ExperimentConfig::from_toml_str("experiment = \"pde_only\"\nsed = 1\n").unwrap_err();
        assert_eq!(e.key(), Some("sed"));
        let e = ExperimentConfig::from_toml_str(
            "experiment = \"sgd_vs_pde_1d\"\n[sgd]\ninit = { kind = \"uniform\", sigma = 0.1 }\n",
        )
        .unwrap_err();
        assert_eq!(e.key(), Some("sgd.init.sigma"));
    }

    #[test]
    fn wrong_types_and_sections_are_named() {
        let e = ExperimentConfig::from_toml_str("experiment = \"pde_only\"\n[pde]\ndt = \"fast\"\n").unwrap_err();
        assert_eq!(e.key(), Some("pde.dt"));
        let e = ExperimentConfig::from_toml_str("experiment = \"pde_only\"\n[sgd]\nstep_size = 1.0\n").unwrap_err();
        assert_eq!(e.key(), Some("sgd"));
        let e = ExperimentConfig::from_toml_str("experiment = \"fig1\"\n").unwrap_err();
        assert_eq!(e.key(), Some("experiment"));
        let e = ExperimentConfig::from_toml_str("experiment = [").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn domain_defaults_to_the_target_dimension() {
        let cfg = ExperimentConfig::from_toml_str("experiment = \"features_d4\"").unwrap();
        assert_eq!(
            cfg.domain,
            DomainSpec::Box {
                lower: vec![-1.0; 4],
                upper: vec![1.0; 4]
            }
        );
    }
}

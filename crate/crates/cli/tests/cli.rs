use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mfb_cli::{ExperimentConfig, ExperimentKind, Plan};
use serde_json::Value;

fn mfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfb"))
        .args(args)
        .env_remove("MFB_THREADS")
        .output()
        .expect("the mfb binary runs")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr_json(out: &Output) -> Value {
    let s = String::from_utf8_lossy(&out.stderr);
    let line = s.lines().last().expect("an error line on stderr");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {s}"))
}

const SHORT_1D: &str = r#"
experiment = "sgd_vs_pde_1d"
seed = 3
output_dir = "unused"

[kernel]
delta = 0.1

[sgd]
n_neurons = 50
step_size = 1e-5
horizon = 0.2
snapshot_every = 10000
risk_records = 20

[pde]
horizon = 0.2
records = 20
density_every = 10
"#;

#[test]
fn run_writes_tables_and_a_finished_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", SHORT_1D);
    let out = tmp.path().join("out");
    let r = mfb(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));

    let sgd = std::fs::read_to_string(out.join("risk_sgd.csv")).unwrap();
    assert!(sgd.starts_with("step,t,risk,risk_normalized\n"));
    assert_eq!(sgd.lines().count(), 1 + 21);
    let pde = std::fs::read_to_string(out.join("risk_pde.csv")).unwrap();
    assert!(pde.starts_with("t,risk,risk_normalized,free_energy,entropy,mass\n"));
    let dens = std::fs::read_to_string(out.join("density_pde.csv")).unwrap();
    assert!(dens.starts_with("t,x_1,rho\n"));
    assert_eq!(dens.lines().count(), 1 + 3 * 200);
    let snaps = std::fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert!(snaps.starts_with("step,particle_id,w_1\n"));
    assert_eq!(snaps.lines().count(), 1 + 3 * 50);

    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "ok");
    assert_eq!(m["experiment"], "sgd_vs_pde_1d");
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert!((m["derived"]["alpha"].as_f64().unwrap() - 0.1565).abs() < 1e-3);
    assert!(m["derived"]["c_d"].as_f64().is_some());
    assert!(m["derived"]["lambda_delta"].as_f64().is_some());
    assert!(m["derived"]["f_sq_norm"].as_f64().is_some());
    // defaults are spelled out
    assert_eq!(m["config"]["sgd"]["project"], false);
    assert_eq!(m["config"]["pde"]["dx"].as_f64(), Some(0.01));
    for name in ["risk_sgd.csv", "risk_pde.csv", "density_pde.csv", "snapshots.csv"] {
        let bytes = std::fs::read(out.join(name)).unwrap();
        assert_eq!(m["outputs"][name]["sha256"].as_str().unwrap(), mfb_cli::output::sha256_hex(&bytes));
    }

    // the manifest alone re-specifies the run
    let again = ExperimentConfig::from_toml_str(m["config_toml"].as_str().unwrap()).unwrap();
    let original = ExperimentConfig::from_toml_str(SHORT_1D).unwrap();
    assert_eq!(again, original);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", SHORT_1D);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let r = mfb(&["run", cfg.to_str().unwrap(), "--output-dir", d.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(0));
    }
    let names: BTreeSet<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    assert!(names.len() >= 5);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n} differs");
    }
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "experiment = \"pde_only\"\n[pde]\nd_t = 1e-5\n");
    for cmd in ["run", "validate", "derive-constants"] {
        let r = mfb(&[cmd, cfg.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(2));
        let e = stderr_json(&r);
        assert_eq!(e["error"], "validation");
        assert_eq!(e["key"], "pde.d_t");
    }
}

#[test]
fn invalid_values_are_rejected_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let cases = [
        ("[sgd]\nstep_size = -1.0\n", "sgd.step_size"),
        ("[sgd]\nn_neurons = 0\n", "sgd.n_neurons"),
        ("[sgd]\nhorizon = 0.0000015\n", "sgd.horizon"),
        ("[kernel]\ndelta = 2.0\n", "kernel.delta"),
        ("[pde]\ndx = 0.03\n", "pde.dx"),
        ("[pde]\ndensity_every = 1000\n", "pde.density_every"),
        ("[target]\nkind = \"bimodal1d\"\nq1 = [1.0]\n", "target.q1"),
        ("[domain]\nshape = \"box\"\nlower = [-1.0, -1.0]\nupper = [1.0, 1.0]\n", "domain"),
    ];
    for (extra, key) in cases {
        let cfg = write(tmp.path(), "c.toml", &format!("experiment = \"sgd_vs_pde_1d\"\n{extra}"));
        let r = mfb(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(2), "{extra}");
        assert_eq!(stderr_json(&r)["key"], key, "{extra}");
    }
    assert!(!out.exists());
}

#[test]
fn runtime_failures_exit_3_and_mark_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", SHORT_1D);
    let blocker = write(tmp.path(), "a_file", "");
    let r = mfb(&["run", cfg.to_str().unwrap(), "--output-dir", blocker.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(stderr_json(&r)["error"], "runtime");

    // an output name already taken by a directory fails after the run started
    let out = tmp.path().join("out");
    std::fs::create_dir_all(out.join("risk_pde.csv")).unwrap();
    let r = mfb(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "failed");
    assert!(m["error"]["message"].as_str().unwrap().contains("risk_pde.csv"));
    assert!(m["outputs"]["risk_sgd.csv"]["sha256"].is_string());
}

#[test]
fn sweep_aggregates_values_and_keeps_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", SHORT_1D);
    let out = tmp.path().join("sweep");
    let r = mfb(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--axis",
        "delta",
        "--values",
        "0.2,1/10,2.0",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2), "delta = 2 collapses the parameter domain");
    let table = std::fs::read_to_string(out.join("sweep_delta.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("delta,seed,series,t,risk,risk_normalized,status,failure"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|l| l.contains(",ok,")).count(), 4);
    assert_eq!(rows.iter().filter(|l| l.contains(",failed,")).count(), 1);
    assert!(out.join("delta_00/risk_sgd.csv").exists());
    assert!(out.join("delta_01/manifest.json").exists());
    // per-value seeds differ and are reproducible
    let seeds: BTreeSet<&str> = rows.iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds.len(), 3);
    let again = tmp.path().join("again");
    mfb(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--axis",
        "delta",
        "--values",
        "0.2,1/10,2.0",
        "--output-dir",
        again.to_str().unwrap(),
    ]);
    assert_eq!(table, std::fs::read_to_string(again.join("sweep_delta.csv")).unwrap());
}

#[test]
fn sweep_rejects_empty_lists_and_bad_axes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", SHORT_1D);
    let c = cfg.to_str().unwrap();
    for (axis, values) in [("delta", ""), ("delta", ","), ("gamma", "1"), ("n", "100"), ("N", "2.5")] {
        let r = mfb(&["sweep", c, "--axis", axis, "--values", values]);
        assert_eq!(r.status.code(), Some(2), "{axis} {values:?}");
        assert_eq!(stderr_json(&r)["error"], "validation");
    }
}

#[test]
fn validate_prints_a_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", "experiment = \"small_n\"\n");
    let r = mfb(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    let text = String::from_utf8(r.stdout).unwrap();
    let resolved = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(resolved.sgd.unwrap().n_neurons, 20);
    assert!(text.contains("step_size"));
}

#[test]
fn derive_constants_prints_the_four_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "experiment = \"sgd_vs_pde_1d\"\n");
    let r = mfb(&["derive-constants", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    let text = String::from_utf8(r.stdout).unwrap();
    let get = |k: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("{k} = "))).unwrap();
        line.split_whitespace().nth(2).unwrap().parse().unwrap()
    };
    assert!((get("C_d") - 15.0 / 17.0).abs() < 1e-12);
    assert!((get("alpha") - 0.15652).abs() < 1e-4);
    assert!((get("lambda_delta") - 0.95).abs() < 1e-12);
    let e2 = (-2.0f64).exp();
    let f_sq = {
        // ∫(1 − e^{x−1})² over [−1, 1], divided by (1 − e^{−2})²
        let g = |x: f64| x - 2.0 * (x - 1.0).exp() + 0.5 * (2.0 * (x - 1.0)).exp();
        (g(1.0) - g(-1.0)) / ((1.0 - e2) * (1.0 - e2))
    };
    assert!((get("f_sq_norm") - f_sq).abs() < 1e-9);

    let r = mfb(&["derive-constants", cfg.to_str().unwrap(), "--json"]);
    let v: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["concave"], true);
}

#[test]
fn thread_cap_must_be_a_positive_integer() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "experiment = \"convexity_probe\"\n");
    for bad in ["0", "many"] {
        let r = Command::new(env!("CARGO_BIN_EXE_mfb"))
            .args(["validate", cfg.to_str().unwrap()])
            .env("MFB_THREADS", bad)
            .output()
            .unwrap();
        assert_eq!(r.status.code(), Some(2));
        assert_eq!(stderr_json(&r)["key"], "MFB_THREADS");
    }
    let out = tmp.path().join("o");
    let r = Command::new(env!("CARGO_BIN_EXE_mfb"))
        .args(["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()])
        .env("MFB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(0));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 1);
}

#[test]
fn usage_errors_are_json_with_exit_2() {
    let r = mfb(&["frobnicate"]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(stderr_json(&r)["key"], "arguments");
    let r = mfb(&["--help"]);
    assert_eq!(r.status.code(), Some(0));
}

#[test]
fn bundled_configs_validate_and_cover_every_kind() {
    let mut kinds = BTreeSet::new();
    let mut figures = BTreeSet::new();
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        assert!(name.starts_with("fig") && name.ends_with(".toml"), "{name}");
        let digits: String = name[3..].chars().take_while(char::is_ascii_digit).collect();
        figures.insert(digits.parse::<u32>().unwrap());
        let plan = Plan::from_path(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        kinds.insert(plan.config.experiment.name());
    }
    assert_eq!(figures, (1..=10).collect());
    let all: BTreeSet<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
    assert_eq!(kinds, all);
}

#[test]
fn chaos_and_probe_outputs_have_their_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let chaos = write(
        tmp.path(),
        "chaos.toml",
        "experiment = \"chaos_test\"\n[sgd]\nstep_size = 1e-5\nhorizon = 0.05\n[pde]\nhorizon = 0.05\nrecords = 5\n\
         [chaos]\nn_values = [10, 40]\nseeds = 2\n",
    );
    let out = tmp.path().join("chaos");
    let r = mfb(&["run", chaos.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let w1 = std::fs::read_to_string(out.join("w1_vs_t.csv")).unwrap();
    assert!(w1.starts_with("N,t,w1_empirical_vs_pde\n"));
    assert_eq!(w1.lines().count(), 1 + 2 * 6);
    let ns: BTreeSet<&str> = w1.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["10", "40"].into_iter().collect());

    let probe = write(tmp.path(), "probe.toml", "experiment = \"convexity_probe\"\n[probe]\npoints = 5\n");
    let out = tmp.path().join("probe");
    let r = mfb(&["run", probe.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    let p = std::fs::read_to_string(out.join("probe.csv")).unwrap();
    assert!(p.starts_with("t,risk,gap,bound\n"));
    assert_eq!(p.lines().count(), 6);
}

#[test]
fn features_output_has_one_row_per_scheme_and_trial() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "f.toml",
        "experiment = \"features_d4\"\n[features]\nn_samples = 200\nn_neurons = 10\ntrials = 2\nkmax = [100, 300]\ntest_size = 500\n",
    );
    let out = tmp.path().join("f");
    let r = mfb(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let t = std::fs::read_to_string(out.join("features.csv")).unwrap();
    let mut lines = t.lines();
    assert_eq!(lines.next(), Some("scheme,n,N,trial,lambda,kmax,test_risk_normalized"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r[1], "200");
        assert_eq!(r[2], "10");
        // only the optimized scheme has a stopping time
        assert_eq!(r[0] == "optimized_w", !r[5].is_empty());
    }
}

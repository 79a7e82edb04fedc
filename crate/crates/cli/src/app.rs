//! Command-line front end.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::derived_constants;
use crate::output::format_float;
use crate::plan::Plan;
use crate::runner::{parse_values, run_config, sweep, SweepAxis};

#[derive(Debug, Parser)]
#[command(name = "mfb", version, about = "Run bump-network SGD and mean-field PDE experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its CSVs and manifest.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Repeat an experiment over values of one parameter.
    Sweep {
        config: PathBuf,
        /// One of delta, N, n, epsilon.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; fractions such as 1/20 are accepted.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check a config and print it with every default filled in.
    Validate { config: PathBuf },
    /// Print C_d, alpha, lambda_delta and the squared norm of f.
    DeriveConstants {
        config: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

/// Caps rayon's pool at `MFB_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MFB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::validation("MFB_THREADS", format!("must be a positive integer (got {raw:?})")))?;
    // a pool that already exists (tests, embedding) is left alone
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs one command, returning what to print on stdout.
pub fn execute(command: Command) -> Result<String, CliError> {
    configure_threads()?;
    match command {
        Command::Run { config, output_dir } => {
            let report = run_config(&config, output_dir.as_deref())?;
            let mut s = format!("wrote {}\n", report.output_dir.display());
            for (name, sum) in &report.files {
                s.push_str(&format!("  {name}  sha256:{sum}\n"));
            }
            for r in &report.summary {
                s.push_str(&format!("{}\n", serde_json::to_string(r).expect("summary serializes")));
            }
            Ok(s)
        }
        Command::Sweep {
            config,
            axis,
            values,
            output_dir,
        } => {
            let axis = SweepAxis::parse(&axis)?;
            let values = parse_values(&values)?;
            let base = ExperimentConfig::from_path(&config)?;
            let dir = output_dir.unwrap_or_else(|| PathBuf::from(&base.output_dir));
            let report = sweep(&base, axis, &values, &dir)?;
            let failed: Vec<String> = report
                .points
                .iter()
                .filter_map(|p| p.result.as_ref().err().map(|e| format!("{} = {}: {e}", axis.name(), p.value)))
                .collect();
            if failed.is_empty() {
                Ok(format!("wrote {}\n", report.table.display()))
            } else {
                let code = report.exit_code();
                let message = format!("{} of {} sweep points failed: {}", failed.len(), values.len(), failed.join("; "));
                Err(if code == 2 {
                    CliError::validation("--values", message)
                } else {
                    CliError::runtime(message)
                })
            }
        }
        Command::Validate { config } => {
            let plan = Plan::from_path(&config)?;
            Ok(plan.config.to_toml_string())
        }
        Command::DeriveConstants { config, json } => {
            let plan = Plan::from_path(&config)?;
            let c = derived_constants(&plan)?;
            if json {
                return Ok(format!("{}\n", serde_json::to_string_pretty(&c).expect("constants serialize")));
            }
            let opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), format_float);
            let mut s = format!("C_d = {}\n", format_float(c.c_d));
            s.push_str(&format!("alpha = {}", opt(c.alpha)));
            if c.concave == Some(false) {
                s.push_str("  (not concave: smallest eigenvalue of -Hessian)");
            }
            s.push('\n');
            s.push_str(&format!("lambda_delta = {}\n", opt(c.lambda_delta)));
            s.push_str(&format!("f_sq_norm = {}\n", format_float(c.f_sq_norm)));
            s.push_str(&format!("nu0 = {}\n", format_float(c.nu0)));
            Ok(s)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let err = CliError::validation("arguments", e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

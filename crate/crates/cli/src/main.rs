use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use trapdiff_cli::{parse_config, run_scenario, write_artifacts, write_error_log, CliError, Scenario};

/// Drift-diffusion trap simulations and their reduced multiscale model.
///
/// Any other `--key value` pair overrides the corresponding config key.
#[derive(Debug, Parser)]
#[command(name = "trapdiff", version)]
struct Args {
    /// full-1d, multiscale-1d, full-2d-slab, full-2d-bubble,
    /// multiscale-2d-bubble, compare-1d, compare-2d, coeffs, dof or
    /// reproduce-paper
    scenario: String,
    /// `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for sweeps and parallel kernels
    #[arg(long)]
    jobs: Option<usize>,
}

const OWN_FLAGS: &[&str] = &["config", "out", "jobs", "help", "version"];

/// Split `--key value` overrides from the arguments clap understands.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut own = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    if let Some(bin) = it.next() {
        own.push(bin);
    }
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            own.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if OWN_FLAGS.contains(&name.as_str()) {
            own.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| CliError::Usage(format!("flag --{name} needs a value")))?,
        };
        overrides.push((name, value));
    }
    Ok((own, overrides))
}

fn main() -> ExitCode {
    let (own, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let args = Args::parse_from(own);
    let result = args.scenario.parse::<Scenario>().and_then(|sc| parse_config(Some(sc), args.config.as_deref(), &overrides));
    let cfg = match result {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            let _ = write_error_log(&args.out, &e);
            return ExitCode::from(2);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run_scenario(&cfg)).and_then(|art| write_artifacts(&args.out, &cfg, &art)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            let _ = write_error_log(&args.out, &e);
            ExitCode::FAILURE
        }
    }
}

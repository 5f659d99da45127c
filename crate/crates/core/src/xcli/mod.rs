//! Experiment harness and command-line interface.
//!
//! `lowrex <experiment> --config <path> [--out <dir>] [--seed <int>] [--jobs <int>]`
//! writes `<experiment>.csv`, `<experiment>.meta.json` and, for experiments
//! with aggregates, `<experiment>.curves.csv`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::{json, Value as Json};

pub mod config;
pub mod experiments;
pub mod table;

pub use config::{Experiment, LambdaRule, Options, RegularizerKind, RunConfig};
pub use experiments::{contour_p50, replay_trial, run, Output, TrialFailure, TrialRows, TrialSeed};
pub use table::{Row, Table, Value};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

/// Bumped when the CSV or sidecar layout changes.
pub const OUTPUT_FORMAT: u32 = 1;

/// Sidecar document: configuration, seeds, failures and derived values.
pub fn meta_json(cfg: &RunConfig, out: &Output) -> Json {
    json!({
        "experiment": out.experiment.name(),
        "config": cfg,
        "master_seed": cfg.master_seed,
        "trial_seeds": out.seeds,
        "failures": out.failures,
        "summary": out.summary,
        "versions": {
            "lowrex": env!("CARGO_PKG_VERSION"),
            "output_format": OUTPUT_FORMAT,
        },
    })
}

/// Writes the CSV table(s) and the JSON sidecar into `dir`.
pub fn write_outputs(cfg: &RunConfig, out: &Output, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let name = out.experiment.name();
    let mut written = vec![];
    let mut put = |file: String, contents: String| -> Result<()> {
        let path = dir.join(file);
        std::fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    put(format!("{name}.csv"), out.table.to_csv())?;
    if let Some(curves) = &out.curves {
        put(format!("{name}.curves.csv"), curves.to_csv())?;
    }
    let meta = serde_json::to_string_pretty(&meta_json(cfg, out)).expect("sidecar is serializable");
    put(format!("{name}.meta.json"), meta + "\n")?;
    Ok(written)
}

#[derive(Debug, Parser)]
#[command(name = "lowrex", version, about = "Low-complexity regularization experiments")]
struct Cli {
    experiment: Experiment,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

/// Entry point of the `lowrex` binary; returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) if out.failures.is_empty() => EXIT_OK,
        Ok(out) => {
            eprintln!("lowrex: {} trial(s) failed; see the meta.json sidecar", out.failures.len());
            EXIT_PARTIAL
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("lowrex: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("lowrex: {e}");
            EXIT_FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<Output> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if cfg.experiment != cli.experiment {
        return Err(Error::Config(format!(
            "config is for {} but {} was requested",
            cfg.experiment.name(),
            cli.experiment.name()
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    let dir = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be ≥ 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let out = pool.install(|| run(&cfg))?;
    write_outputs(&cfg, &out, &dir)?;
    Ok(out)
}

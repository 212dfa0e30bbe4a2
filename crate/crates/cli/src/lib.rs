//! Configuration-driven experiment runner.
//!
//! A run reads a JSON configuration, builds the objects it names, dispatches
//! to the library and writes `results.csv` and `report.json` into the output
//! directory. Identical configurations give byte-identical CSV files.

pub mod config;
pub mod presets;
pub mod report;
pub mod runner;
pub mod specs;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{load_config, parse_config, Command, ConfigError, ExperimentConfig};
pub use runner::Outcome;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run failed: {0}")]
    Runtime(#[from] phaseprior::Error),
    #[error("cannot write artifacts: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 2 for configuration problems, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub outcome: Outcome,
    pub report: serde_json::Value,
}

/// Check that a configuration parses and that everything it references can be built.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    runner::prepare(cfg).map(drop)
}

/// Run `cfg`, writing into `out` if given, else into the configured `output_dir`.
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunSummary, RunError> {
    let dir = match (out, &cfg.output_dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) if d.is_relative() => cfg.base_dir.join(d),
        (None, Some(d)) => d.clone(),
        (None, None) => {
            return Err(
                ConfigError::at_field("output_dir", "no output directory (set `output_dir` or pass --out)").into(),
            )
        }
    };
    let plan = runner::prepare(cfg)?;
    let start = Instant::now();
    let outcome = runner::execute(plan)?;
    let prov = report::Provenance {
        wall_time: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    let report = report::report(cfg, &outcome, &prov);
    report::write_artifacts(&dir, &report, &outcome)?;
    Ok(RunSummary {
        output_dir: dir,
        outcome,
        report,
    })
}

//! Experiment harness for the average-field laboratory: configuration,
//! orchestration of the suites, and report emission.
//!
//! A run reads one JSON configuration, executes a suite, and leaves a
//! directory with CSV tables, JSON results, optional binary field exports,
//! `report.md` and `manifest.json`.

pub mod config;
pub mod manifest;
pub mod report;
pub mod suites;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{parse_config, ExperimentConfig, Provenance, Suite};
pub use manifest::{Check, Manifest, Status};
pub use report::emit_report;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "ANYON_MF_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] anyon_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Runs the configured suite into `dir` and returns its manifest. Nothing is
/// written besides the suite's own results; see [`emit_report`].
pub fn run_suite(cfg: &ExperimentConfig, provenance: Option<Provenance>, dir: &Path) -> Result<Manifest, CliError> {
    let suite = cfg.suite()?;
    std::fs::create_dir_all(dir)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let mut manifest = Manifest {
        suite: suite.name().into(),
        seed: cfg.seed,
        provenance,
        config: serde_json::to_value(cfg)?,
        ..Manifest::default()
    };
    let start = Instant::now();
    pool.install(|| suites::run(suite, cfg, dir, &mut manifest))?;
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    Ok(manifest)
}

/// `runs/<UTC timestamp>`, with a numeric suffix if that already exists.
pub fn timestamped_dir(root: &Path) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let mut dir = root.join(&stamp);
    let mut k = 1;
    while dir.exists() {
        k += 1;
        dir = root.join(format!("{stamp}-{k}"));
    }
    dir
}

/// Command-line entry: parse, apply overrides, run, and emit the report.
pub fn execute(
    suite: Suite,
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(Manifest, PathBuf), CliError> {
    let (mut cfg, provenance) = parse_config(config_path)?;
    if let Some(s) = cfg.suite {
        if s != suite {
            return Err(CliError::Config(format!(
                "configuration is for suite `{}` but `{}` was requested",
                s.name(),
                suite.name()
            )));
        }
    }
    cfg.suite = Some(suite);
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let dir = match out.or_else(|| cfg.output.clone()) {
        Some(d) => d,
        None => timestamped_dir(Path::new("runs")),
    };
    let mut manifest = run_suite(&cfg, Some(provenance), &dir)?;
    emit_report(&mut manifest, &dir)?;
    Ok((manifest, dir))
}

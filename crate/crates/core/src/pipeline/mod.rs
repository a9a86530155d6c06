//! Command-level orchestration: configuration, the `simulate`, `run`,
//! `diffuse` and `report` commands, and their on-disk outputs.
//!
//! Outputs are deterministic for a fixed configuration and seed: maps are
//! ordered, per-subject work is collected in subject order, and no
//! timestamps or absolute paths are written.

mod config;
mod diffuse;
mod features;
mod report;
mod run;

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub use config::{
    DiffusionConfig, HamiltonianConfig, LossConfig, ModelConfig, PathsConfig, PipelineConfig, PreprocessConfig,
    SimulateConfig, StrokeConfig, BIOMARKERS,
};
pub use diffuse::cmd_diffuse;
pub use features::preprocess;
pub use report::{
    cmd_report, BiomarkerReport, CentralityReport, ClassCounts, DiffusionReport, HeadReport, MetricsFile, Provenance,
    RunReport, SimulateReport, SnapshotMeans, Split, SubjectBiomarkers, Summary, SummaryAggregate, SummaryRow,
};
pub use run::{cmd_run, cmd_simulate, stratified_split};

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    write_text(path, &(text + "\n"))
}

/// Runs `f` on a pool of `workers` threads (all cores when 0).
pub(crate) fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} worker threads: {e}")))?;
    Ok(pool.install(f))
}

//! Report types written by the commands, and merging of run reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_json, write_text};
use crate::error::{Error, Result};
use crate::graphdiff::Centrality;
use crate::model::MetricsReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            config_hash,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

/// Per-subject biomarkers. `None` (JSON `null`) marks a value that could not
/// be computed; its name is also listed in `missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectBiomarkers {
    pub subject_id: String,
    pub label: u8,
    pub split: Split,
    pub latent_energy_entropy: Option<f64>,
    pub attention_entropy: f64,
    pub geodesic_mean: Option<f64>,
    pub geodesic_max: Option<f64>,
    pub curvature_mean: Option<f64>,
    pub memory_index: BTreeMap<String, Option<f64>>,
    pub stroke_residual: f64,
    pub sudep_probability: f64,
    pub stroke_probability: f64,
    pub composite_risk_index: f64,
    /// Risk-index terms dropped because the cohort had no spread.
    pub risk_terms_dropped: Vec<String>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityReport {
    pub labels: Vec<String>,
    #[serde(flatten)]
    pub centrality: Centrality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerReport {
    pub provenance: Provenance,
    pub subjects: Vec<SubjectBiomarkers>,
    pub diffusion_centrality: CentralityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadReport {
    pub test: MetricsReport,
    pub val: Option<MetricsReport>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub plateaued: bool,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub split: BTreeMap<Split, ClassCounts>,
    pub heads: BTreeMap<String, HeadReport>,
    /// Logistic regression on the signal biomarkers, scored on the test set.
    pub baseline: MetricsReport,
    pub biomarkers: BiomarkerReport,
}

/// Held-out metrics only, as written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub provenance: Provenance,
    pub models: BTreeMap<String, MetricsReport>,
}

impl RunReport {
    pub fn metrics_file(&self) -> MetricsFile {
        let mut models: BTreeMap<String, MetricsReport> =
            self.heads.iter().map(|(k, h)| (k.clone(), h.test.clone())).collect();
        models.insert("baseline".into(), self.baseline.clone());
        MetricsFile {
            provenance: self.provenance.clone(),
            models,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeans {
    pub t: f64,
    pub cortical: f64,
    pub subcortical: f64,
    pub brainstem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionReport {
    pub provenance: Provenance,
    pub seed_region: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub step: f64,
    /// Group means at each snapshot; empty unless the graph has the bundled
    /// cortical / subcortical / brainstem layout.
    pub group_means: Vec<SnapshotMeans>,
    pub centrality: CentralityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub provenance: Provenance,
    pub n_subjects: usize,
    pub positives: usize,
    pub effect_size: f64,
    pub manifest: String,
}

/// One model's held-out metrics from one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub source: String,
    pub seed: u64,
    pub config_hash: String,
    pub model: String,
    pub acc: f64,
    pub auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryAggregate {
    pub model: String,
    pub runs: usize,
    pub mean: BTreeMap<String, f64>,
    pub sd: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hashes: Vec<String>,
    pub rows: Vec<SummaryRow>,
    pub aggregate: Vec<SummaryAggregate>,
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,seed,config_hash,model,acc,auc,f1,precision,recall,n_test\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.source, r.seed, r.config_hash, r.model, r.acc, r.auc, r.f1, r.precision, r.recall, r.n_test
            );
        }
        s
    }
}

const SUMMARY_METRICS: [&str; 5] = ["acc", "auc", "f1", "precision", "recall"];

fn read_run_report(input: &Path) -> Result<RunReport> {
    let path: PathBuf = if input.is_dir() { input.join("report.json") } else { input.to_path_buf() };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Merges run reports (run directories or `report.json` files) into one
/// table of held-out metrics per run and model, plus mean and population
/// standard deviation per model. Reports from different configurations are
/// refused unless `allow_mixed` is set.
pub fn cmd_report(inputs: &[PathBuf], out: &Path, allow_mixed: bool) -> Result<Summary> {
    if inputs.is_empty() {
        return Err(Error::Config("report needs at least one input".into()));
    }
    let mut rows = Vec::new();
    let mut hashes = Vec::new();
    for input in inputs {
        let report = read_run_report(input)?;
        let hash = report.provenance.config_hash.clone();
        if !hashes.contains(&hash) {
            hashes.push(hash.clone());
        }
        for (model, m) in report.metrics_file().models {
            rows.push(SummaryRow {
                source: input.display().to_string(),
                seed: report.provenance.seed,
                config_hash: hash.clone(),
                model,
                acc: m.acc,
                auc: m.auc,
                f1: m.f1,
                precision: m.precision,
                recall: m.recall,
                n_test: m.total(),
            });
        }
    }
    if hashes.len() > 1 && !allow_mixed {
        return Err(Error::Config(format!(
            "inputs come from {} different configurations ({}); pass --allow-mixed to merge anyway",
            hashes.len(),
            hashes.join(", ")
        )));
    }
    hashes.sort();

    let mut by_model: BTreeMap<String, Vec<&SummaryRow>> = BTreeMap::new();
    for r in &rows {
        by_model.entry(r.model.clone()).or_default().push(r);
    }
    let aggregate = by_model
        .into_iter()
        .map(|(model, rs)| {
            let n = rs.len() as f64;
            let mut mean = BTreeMap::new();
            let mut sd = BTreeMap::new();
            for name in SUMMARY_METRICS {
                let v: Vec<f64> = rs
                    .iter()
                    .map(|r| match name {
                        "acc" => r.acc,
                        "auc" => r.auc,
                        "f1" => r.f1,
                        "precision" => r.precision,
                        _ => r.recall,
                    })
                    .collect();
                let m = v.iter().sum::<f64>() / n;
                mean.insert(name.to_string(), m);
                sd.insert(name.to_string(), (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt());
            }
            SummaryAggregate {
                model,
                runs: rs.len(),
                mean,
                sd,
            }
        })
        .collect();

    let summary = Summary {
        config_hashes: hashes,
        rows,
        aggregate,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("summary.json"), &summary)?;
    write_text(&out.join("summary.csv"), &summary.to_csv())?;
    Ok(summary)
}

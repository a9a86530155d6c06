//! Text formats for windows and cohort manifests.
//!
//! A window file is
//!
//! ```text
//! # modality,EEG
//! # rate,512
//! 0.1,0.2,...
//! ```
//!
//! with one comma-separated row per channel. The manifest is a JSON array of
//! `{subject_id, label, files: {modality: relative path}}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabeledRecord, Modality, TimeSeriesWindow};
use crate::error::{Error, Result};

pub fn window_to_csv(w: &TimeSeriesWindow) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# modality,{}", w.modality());
    let _ = writeln!(s, "# rate,{}", w.sample_rate());
    for c in 0..w.channels() {
        let row: Vec<String> = w.values().row(c).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn window_from_csv(text: &str, origin: &str) -> Result<TimeSeriesWindow> {
    let parse_err = |message: String| Error::Parse {
        path: origin.to_string(),
        message,
    };
    let mut modality = None;
    let mut rate = None;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let (key, value) = header
                .split_once(',')
                .ok_or_else(|| parse_err(format!("line {}: malformed header", lineno + 1)))?;
            match key.trim() {
                "modality" => modality = Some(value.trim().parse::<Modality>()?),
                "rate" => {
                    rate = Some(value.trim().parse::<f64>().map_err(|e| {
                        parse_err(format!("line {}: bad rate: {e}", lineno + 1))
                    })?)
                }
                _ => {}
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(format!("line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    let modality = modality.ok_or_else(|| parse_err("missing '# modality' header".into()))?;
    let rate = rate.ok_or_else(|| parse_err("missing '# rate' header".into()))?;
    TimeSeriesWindow::from_rows(modality, rate, &rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub label: u8,
    pub files: BTreeMap<Modality, String>,
}

/// Writes one CSV per recorded window under `dir` plus `dir/manifest.json`.
/// Returns the manifest path.
pub fn write_cohort(dir: &Path, cohort: &[LabeledRecord]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Vec::with_capacity(cohort.len());
    for rec in cohort {
        let mut files = BTreeMap::new();
        for (m, w) in &rec.windows {
            let Some(w) = w else { continue };
            let name = format!("{}_{}.csv", rec.subject_id, m.name());
            let path = dir.join(&name);
            fs::write(&path, window_to_csv(w)).map_err(|e| Error::io(&path, e))?;
            files.insert(*m, name);
        }
        manifest.push(ManifestEntry {
            subject_id: rec.subject_id.clone(),
            label: rec.label,
            files,
        });
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    for e in &entries {
        if e.label > 1 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("{}: label must be 0 or 1", e.subject_id),
            });
        }
    }
    Ok(entries)
}

/// Loads every subject listed in a manifest; modalities without a file are
/// marked missing.
pub fn read_cohort(manifest: &Path) -> Result<Vec<LabeledRecord>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    read_manifest(manifest)?
        .into_iter()
        .map(|entry| {
            let mut windows = Vec::with_capacity(Modality::ALL.len());
            for m in Modality::ALL {
                let w = match entry.files.get(&m) {
                    Some(rel) => {
                        let path = base.join(rel);
                        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                        let w = window_from_csv(&text, &path.display().to_string())?;
                        if w.modality() != m {
                            return Err(Error::Parse {
                                path: path.display().to_string(),
                                message: format!("expected modality {m}, file says {}", w.modality()),
                            });
                        }
                        Some(w)
                    }
                    None => None,
                };
                windows.push((m, w));
            }
            Ok(LabeledRecord {
                subject_id: entry.subject_id,
                windows,
                label: entry.label,
            })
        })
        .collect()
}

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Threshold metrics from confusion counts plus the rank AUC.
///
/// A metric whose denominator is zero is reported as 0 and its name is
/// listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub undefined: Vec<String>,
}

impl MetricsReport {
    /// Metrics implied by confusion counts alone; `auc` is left at 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let mut undefined = Vec::new();
        let mut ratio = |num: usize, den: usize, name: &str| {
            if den == 0 {
                undefined.push(name.to_string());
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let acc = ratio(tp + tn, tp + fp + fn_ + tn, "acc");
        let precision = ratio(tp, tp + fp, "precision");
        let recall = ratio(tp, tp + fn_, "recall");
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            undefined.push("f1".into());
            0.0
        };
        Self {
            acc,
            auc: 0.0,
            f1,
            precision,
            recall,
            tp,
            fp,
            fn_,
            tn,
            undefined,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Mann-Whitney AUC with average ranks for ties. `None` without both classes.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their average
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}

/// Scores at or above `threshold` count as positive predictions.
pub fn metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    ensure!(scores.len() == labels.len(), Shape, "{} scores for {} labels", scores.len(), labels.len());
    ensure!(!scores.is_empty(), InvalidParameter, "no scores");
    ensure!(labels.iter().all(|&l| l <= 1), InvalidParameter, "labels must be 0 or 1");
    ensure!(scores.iter().all(|s| !s.is_nan()), InvalidParameter, "NaN score");
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let mut report = MetricsReport::from_counts(tp, fp, fn_, tn);
    match auc(scores, labels) {
        Some(a) => report.auc = a,
        None => report.undefined.push("auc".into()),
    }
    Ok(report)
}

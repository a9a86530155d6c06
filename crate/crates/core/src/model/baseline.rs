use serde::{Deserialize, Serialize};

use super::head::probability;
use crate::error::{ensure, Result};

/// Per-feature standardization learned from a training set. Constant features
/// keep a unit scale and are listed in `constant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub constant: Vec<usize>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        ensure!(!rows.is_empty(), InvalidParameter, "no rows to standardize");
        let d = rows[0].len();
        ensure!(rows.iter().all(|r| r.len() == d), Shape, "rows differ in length");
        ensure!(rows.iter().flatten().all(|v| v.is_finite()), InvalidParameter, "non-finite feature");
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let mut constant = Vec::new();
        let sd = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 * (1.0 + mean[j] * mean[j]) {
                    var.sqrt()
                } else {
                    constant.push(j);
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, sd, constant })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// The feature vector and weights of a logistic model `P = σ(wᵀf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub f: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn logistic_baseline_predict(fv: &FeatureVector) -> Result<f64> {
    ensure!(fv.f.len() == fv.w.len(), Shape, "{} features for {} weights", fv.f.len(), fv.w.len());
    ensure!(fv.f.iter().all(|v| v.is_finite()), InvalidParameter, "non-finite feature");
    Ok(probability(fv.f.iter().zip(&fv.w).map(|(a, b)| a * b).sum()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineOptions {
    pub epochs: usize,
    pub lr: f64,
    /// Ridge penalty on the weights (not the intercept).
    pub l2: f64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.5,
            l2: 1e-2,
        }
    }
}

/// Logistic regression on standardized features with an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticBaseline {
    pub scaler: Standardizer,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LogisticBaseline {
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        ensure!(
            features.len() == self.weights.len(),
            Shape,
            "{} features, baseline expects {}",
            features.len(),
            self.weights.len()
        );
        let mut f = self.scaler.apply(features);
        f.push(1.0);
        let mut w = self.weights.clone();
        w.push(self.intercept);
        logistic_baseline_predict(&FeatureVector { f, w })
    }
}

/// Full-batch gradient descent on mean BCE.
pub fn logistic_baseline_fit(features: &[Vec<f64>], labels: &[u8], opts: &BaselineOptions) -> Result<LogisticBaseline> {
    ensure!(features.len() == labels.len(), Shape, "{} rows for {} labels", features.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l == 1).count();
    ensure!(labels.iter().all(|&l| l <= 1), InvalidParameter, "labels must be 0 or 1");
    ensure!(pos > 0 && pos < labels.len(), Degenerate, "logistic baseline needs both classes");
    ensure!(opts.lr >= 0.0 && opts.l2 >= 0.0, InvalidParameter, "lr and l2 must be >= 0");
    let scaler = Standardizer::fit(features)?;
    let x: Vec<Vec<f64>> = features.iter().map(|r| scaler.apply(r)).collect();
    let d = scaler.mean.len();
    let n = x.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..opts.epochs {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (row, &y) in x.iter().zip(labels) {
            let z: f64 = row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let r = probability(z) - y as f64;
            for (g, v) in gw.iter_mut().zip(row) {
                *g += r * v / n;
            }
            gb += r / n;
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= opts.lr * (g + opts.l2 * *wj);
        }
        b -= opts.lr * gb;
    }
    Ok(LogisticBaseline {
        scaler,
        weights: w,
        intercept: b,
    })
}

/// Composite risk index with the terms that were dropped for lack of cohort
/// variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskIndex {
    pub value: f64,
    pub dropped: Vec<usize>,
}

/// `σ(Σ_k w_k z_k + logit(model_prob))` over cohort z-scores. `None` z-scores
/// (zero cohort variance) are dropped and reported.
pub fn composite_risk_index(z_scores: &[Option<f64>], model_prob: f64, weights: &[f64]) -> Result<RiskIndex> {
    ensure!(z_scores.len() == weights.len(), Shape, "{} biomarkers for {} weights", z_scores.len(), weights.len());
    ensure!(weights.iter().all(|&w| w >= 0.0 && w.is_finite()), InvalidParameter, "weights must be nonnegative");
    ensure!(
        model_prob > 0.0 && model_prob < 1.0,
        InvalidParameter,
        "model probability must lie in (0, 1)"
    );
    let mut dropped = Vec::new();
    let mut logit = (model_prob / (1.0 - model_prob)).ln();
    for (k, (z, w)) in z_scores.iter().zip(weights).enumerate() {
        match z {
            Some(z) => {
                ensure!(z.is_finite(), InvalidParameter, "non-finite biomarker z-score");
                logit += w * z;
            }
            None => dropped.push(k),
        }
    }
    let value = if weights.iter().all(|&w| w == 0.0) {
        model_prob
    } else {
        probability(logit)
    };
    Ok(RiskIndex { value, dropped })
}

/// Cohort z-scores of one subject's biomarkers; `None` where the cohort has no
/// spread.
pub fn cohort_z_scores(cohort: &Standardizer, biomarkers: &[f64]) -> Vec<Option<f64>> {
    biomarkers
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if cohort.constant.contains(&k) {
                None
            } else {
                Some((v - cohort.mean[k]) / cohort.sd[k])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::metrics::auc;

    #[test]
    fn zero_weights_give_half() {
        let p = logistic_baseline_predict(&FeatureVector {
            f: vec![3.0, -2.0],
            w: vec![0.0, 0.0],
        })
        .unwrap();
        assert_eq!(p, 0.5);
        let p = logistic_baseline_predict(&FeatureVector { f: vec![0.0], w: vec![1.0] }).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn separable_data_ranks_perfectly() {
        let train: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.1 + if i >= 10 { 1.0 } else { 0.0 }]).collect();
        let labels: Vec<u8> = (0..20).map(|i| (i >= 10) as u8).collect();
        let model = logistic_baseline_fit(&train, &labels, &BaselineOptions::default()).unwrap();
        let test = [0.05, 0.7, 1.6, 3.0, -1.0, 2.2];
        let test_labels = [0, 0, 1, 1, 0, 1];
        let scores: Vec<f64> = test.iter().map(|&x| model.predict(&[x]).unwrap()).collect();
        assert_eq!(auc(&scores, &test_labels), Some(1.0));
    }

    #[test]
    fn baseline_rejects_single_class() {
        assert!(logistic_baseline_fit(&[vec![1.0], vec![2.0]], &[1, 1], &BaselineOptions::default()).is_err());
    }

    #[test]
    fn risk_index_cases() {
        let r = composite_risk_index(&[Some(0.7), Some(-2.0)], 0.3, &[0.0, 0.0]).unwrap();
        assert_eq!(r.value, 0.3);
        let r = composite_risk_index(&[Some(1.0), Some(-1.0)], 0.5, &[1.0, 1.0]).unwrap();
        assert_eq!(r.value, 0.5);
        let lo = composite_risk_index(&[Some(0.1), Some(0.0)], 0.4, &[0.5, 1.0]).unwrap();
        let hi = composite_risk_index(&[Some(0.9), Some(0.0)], 0.4, &[0.5, 1.0]).unwrap();
        assert!(hi.value > lo.value);
        let d = composite_risk_index(&[None, Some(1.0)], 0.5, &[1.0, 1.0]).unwrap();
        assert_eq!(d.dropped, vec![0]);
        assert!(composite_risk_index(&[Some(1.0)], 0.5, &[-1.0]).is_err());
    }

    #[test]
    fn z_scores_flag_constant_biomarkers() {
        let s = Standardizer::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(s.constant, vec![1]);
        assert_eq!(cohort_z_scores(&s, &[3.0, 5.0]), vec![Some(1.0), None]);
    }
}

use serde::{Deserialize, Serialize};

use super::layers::sigmoid;
use crate::attention::{attention_entropy, AttentionOutput, FusedEmbedding};
use crate::error::{ensure, Result};

/// Predicted probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-12;

/// Sigmoid read-out `σ(w_out · h + b_out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionHead {
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl PredictionHead {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w_out: vec![0.0; dim],
            b_out: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_out.len()
    }

    pub fn logit(&self, h: &[f64]) -> Result<f64> {
        ensure!(
            h.len() == self.w_out.len(),
            Shape,
            "fused vector has {} entries, head expects {}",
            h.len(),
            self.w_out.len()
        );
        Ok(self.w_out.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + self.b_out)
    }
}

pub fn probability(logit: f64) -> f64 {
    sigmoid(logit).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

pub fn predict(fused: &FusedEmbedding, head: &PredictionHead) -> Result<f64> {
    Ok(probability(head.logit(&fused.vector)?))
}

/// Direction of the attention-entropy penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropySign {
    /// `+H`: training sharpens attention.
    #[default]
    Minimize,
    /// `-H`: training spreads attention.
    Maximize,
}

impl EntropySign {
    pub fn factor(self) -> f64 {
        match self {
            EntropySign::Minimize => 1.0,
            EntropySign::Maximize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_att: f64,
    pub lambda_stroke: f64,
    #[serde(default)]
    pub entropy_sign: EntropySign,
}

impl LossWeights {
    pub fn new(lambda_att: f64, lambda_stroke: f64, entropy_sign: EntropySign) -> Result<Self> {
        ensure!(
            lambda_att >= 0.0 && lambda_stroke >= 0.0 && lambda_att.is_finite() && lambda_stroke.is_finite(),
            InvalidParameter,
            "loss weights must be nonnegative"
        );
        Ok(Self {
            lambda_att,
            lambda_stroke,
            entropy_sign,
        })
    }

    pub fn bce_only() -> Self {
        Self {
            lambda_att: 0.0,
            lambda_stroke: 0.0,
            entropy_sign: EntropySign::Minimize,
        }
    }
}

pub fn bce(yhat: f64, y: u8) -> f64 {
    let p = yhat.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `BCE(ŷ, y) ± λ_att H_att + λ_stroke r²` for one subject.
pub fn composite_loss(yhat: f64, y: u8, attention: &AttentionOutput, diffusion_residual: f64, w: &LossWeights) -> Result<f64> {
    ensure!(y <= 1, InvalidParameter, "label must be 0 or 1, got {y}");
    ensure!(yhat.is_finite(), InvalidParameter, "non-finite prediction");
    ensure!(diffusion_residual.is_finite(), InvalidParameter, "non-finite diffusion residual");
    Ok(bce(yhat, y)
        + w.lambda_att * w.entropy_sign.factor() * attention_entropy(attention)
        + w.lambda_stroke * diffusion_residual * diffusion_residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn fused(v: &[f64]) -> FusedEmbedding {
        FusedEmbedding {
            vector: v.to_vec(),
            mask: vec![true],
        }
    }

    fn uniform(n: usize) -> AttentionOutput {
        AttentionOutput {
            values: DMatrix::zeros(n, 1),
            weights: DMatrix::from_element(n, n, 1.0 / n as f64),
        }
    }

    #[test]
    fn predict_cases() {
        assert_eq!(predict(&fused(&[3.0, -1.0]), &PredictionHead::zeros(2)).unwrap(), 0.5);
        let big = PredictionHead {
            w_out: vec![100.0],
            b_out: 0.0,
        };
        let p = predict(&fused(&[1.0]), &big).unwrap();
        assert!((1.0 - 1e-6..1.0).contains(&p));
        let hand = PredictionHead {
            w_out: vec![1.0, -1.0],
            b_out: 0.0,
        };
        assert!((predict(&fused(&[2.0, 1.0]), &hand).unwrap() - 0.7311).abs() < 1e-4);
        assert!(predict(&fused(&[1.0]), &hand).is_err());
        let neg = PredictionHead {
            w_out: vec![-1000.0],
            b_out: 0.0,
        };
        assert!(predict(&fused(&[1.0]), &neg).unwrap() > 0.0);
    }

    #[test]
    fn loss_cases() {
        let w0 = LossWeights::bce_only();
        assert!(composite_loss(1.0 - 1e-12, 1, &uniform(3), 0.0, &w0).unwrap() <= 1e-10);
        assert!(composite_loss(1.0, 1, &uniform(3), 0.0, &w0).unwrap() <= 1e-10);
        assert!((composite_loss(0.5, 0, &uniform(3), 0.0, &w0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(composite_loss(0.0, 1, &uniform(3), 0.0, &w0).unwrap().is_finite());

        let att = LossWeights::new(1.0, 0.0, EntropySign::Minimize).unwrap();
        let base = composite_loss(0.3, 1, &uniform(3), 0.0, &w0).unwrap();
        let with = composite_loss(0.3, 1, &uniform(3), 0.0, &att).unwrap();
        assert!((with - base - 3f64.ln()).abs() < 1e-12);
        let flipped = LossWeights::new(1.0, 0.0, EntropySign::Maximize).unwrap();
        assert!((composite_loss(0.3, 1, &uniform(3), 0.0, &flipped).unwrap() - base + 3f64.ln()).abs() < 1e-12);

        let stroke = LossWeights::new(0.0, 2.0, EntropySign::Minimize).unwrap();
        assert!((composite_loss(0.3, 1, &uniform(3), 0.5, &stroke).unwrap() - base - 0.5).abs() < 1e-12);

        assert!(LossWeights::new(-1.0, 0.0, EntropySign::Minimize).is_err());
        assert!(composite_loss(0.5, 2, &uniform(3), 0.0, &w0).is_err());
    }
}

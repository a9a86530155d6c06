//! Trainable part of the network: attention projections and the sigmoid head
//! on top of the fused embedding, with exact gradients of the composite loss.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{bce, probability, LossWeights, PredictionHead};
use super::metrics::auc;
use crate::attention::{
    cross_modal_fuse, fused_dim, masked_attention, row_entropy_mean, AttentionOutput, HeadProjection, ProjectionSet,
};
use crate::error::{ensure, Error, Result};

/// One subject as seen by the fusion model.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInput {
    /// One `d_model` token per modality, `None` when missing.
    pub tokens: Vec<Option<Vec<f64>>>,
    pub label: u8,
    /// Stroke-diffusion residual; constant with respect to the parameters.
    pub stroke_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub proj: ProjectionSet,
    pub head: PredictionHead,
}

/// Gradient with the same layout as [`FusionModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGradient {
    pub proj: Vec<HeadProjection>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl FusionGradient {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for h in &self.proj {
            v.extend(h.w_q.iter());
            v.extend(h.w_k.iter());
            v.extend(h.w_v.iter());
        }
        v.extend(&self.w_out);
        v.push(self.b_out);
        v
    }
}

impl FusionModel {
    /// Random projections (seeded) and a zero head.
    pub fn init(tokens: usize, d_model: usize, d_k: usize, heads: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proj = ProjectionSet::random(d_model, d_k, heads, &mut rng)?;
        let head = PredictionHead::zeros(fused_dim(tokens, &proj));
        Ok(Self { proj, head })
    }

    pub fn n_parameters(&self) -> usize {
        3 * self.proj.n_heads() * self.proj.d_model() * self.proj.d_k() + self.head.dim() + 1
    }

    /// Flat parameter vector: per head `W_Q, W_K, W_V` (column-major), then
    /// `w_out`, then `b_out`.
    pub fn parameters(&self) -> Vec<f64> {
        FusionGradient {
            proj: self.proj.heads.clone(),
            w_out: self.head.w_out.clone(),
            b_out: self.head.b_out,
        }
        .to_vec()
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        ensure!(
            p.len() == self.n_parameters(),
            Shape,
            "{} parameters, model has {}",
            p.len(),
            self.n_parameters()
        );
        let mut it = p.iter().copied();
        for h in &mut self.proj.heads {
            for m in [&mut h.w_q, &mut h.w_k, &mut h.w_v] {
                for v in m.iter_mut() {
                    *v = it.next().expect("length checked");
                }
            }
        }
        for v in &mut self.head.w_out {
            *v = it.next().expect("length checked");
        }
        self.head.b_out = it.next().expect("length checked");
        Ok(())
    }

    pub fn forward(&self, x: &FusionInput) -> Result<(f64, AttentionOutput)> {
        let (fused, att) = cross_modal_fuse(&x.tokens, &self.proj)?;
        Ok((probability(self.head.logit(&fused.vector)?), att))
    }

    pub fn predict(&self, x: &FusionInput) -> Result<f64> {
        Ok(self.forward(x)?.0)
    }

    /// Mean composite loss over `batch`.
    pub fn loss(&self, batch: &[FusionInput], w: &LossWeights) -> Result<f64> {
        ensure!(!batch.is_empty(), InvalidParameter, "empty batch");
        let mut total = 0.0;
        for x in batch {
            let (p, att) = self.forward(x)?;
            total += super::head::composite_loss(p, x.label, &att, x.stroke_residual, w)?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean composite loss and its exact gradient.
    pub fn loss_and_gradient(&self, batch: &[FusionInput], w: &LossWeights) -> Result<(f64, FusionGradient)> {
        ensure!(!batch.is_empty(), InvalidParameter, "empty batch");
        let (dm, dk, nh) = (self.proj.d_model(), self.proj.d_k(), self.proj.n_heads());
        let zero = DMatrix::zeros(dm, dk);
        let mut grad = FusionGradient {
            proj: vec![
                HeadProjection {
                    w_q: zero.clone(),
                    w_k: zero.clone(),
                    w_v: zero,
                };
                nh
            ],
            w_out: vec![0.0; self.head.dim()],
            b_out: 0.0,
        };
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for x in batch {
            total += self.accumulate(x, w, scale, &mut grad)?;
        }
        Ok((total * scale, grad))
    }

    fn accumulate(&self, input: &FusionInput, lw: &LossWeights, scale: f64, grad: &mut FusionGradient) -> Result<f64> {
        let m = input.tokens.len();
        let (dm, dk, nh) = (self.proj.d_model(), self.proj.d_k(), self.proj.n_heads());
        let mask: Vec<bool> = input.tokens.iter().map(Option::is_some).collect();
        let present = mask.iter().filter(|&&p| p).count();
        ensure!(present > 0, InvalidParameter, "every modality is missing");
        ensure!(m * dm + nh * dk == self.head.dim(), Shape, "token count does not match the head");
        let mut x = DMatrix::zeros(m, dm);
        for (i, t) in input.tokens.iter().enumerate() {
            if let Some(t) = t {
                ensure!(t.len() == dm, Shape, "token {i} has width {}, expected {dm}", t.len());
                x.row_mut(i).copy_from_slice(t);
            }
        }

        struct Cache {
            q: DMatrix<f64>,
            k: DMatrix<f64>,
            v: DMatrix<f64>,
            p: DMatrix<f64>,
        }
        let mut caches = Vec::with_capacity(nh);
        let mut fused: Vec<f64> = x.transpose().iter().copied().collect();
        let mut weights = DMatrix::zeros(nh * m, m);
        for (hi, h) in self.proj.heads.iter().enumerate() {
            let q = &x * &h.w_q;
            let k = &x * &h.w_k;
            let v = &x * &h.w_v;
            let out = masked_attention(&q, &k, &v, Some(&mask))?;
            for c in 0..dk {
                fused.push((0..m).filter(|&i| mask[i]).map(|i| out.values[(i, c)]).sum::<f64>() / present as f64);
            }
            weights.view_mut((hi * m, 0), (m, m)).copy_from(&out.weights);
            caches.push(Cache { q, k, v, p: out.weights });
        }

        let logit = self.head.logit(&fused)?;
        let yhat = probability(logit);
        let entropy = row_entropy_mean(&weights);
        let loss = bce(yhat, input.label)
            + lw.lambda_att * lw.entropy_sign.factor() * entropy
            + lw.lambda_stroke * input.stroke_residual * input.stroke_residual;

        let dlogit = (yhat - input.label as f64) * scale;
        for (g, f) in grad.w_out.iter_mut().zip(&fused) {
            *g += dlogit * f;
        }
        grad.b_out += dlogit;

        // entropy is averaged over all nh*m query rows
        let d_entropy = lw.lambda_att * lw.entropy_sign.factor() * scale / (nh * m) as f64;
        let inv_sqrt_dk = 1.0 / (dk as f64).sqrt();
        for (hi, c) in caches.iter().enumerate() {
            let mut d_out = DMatrix::zeros(m, dk);
            for i in (0..m).filter(|&i| mask[i]) {
                for col in 0..dk {
                    d_out[(i, col)] = dlogit * self.head.w_out[m * dm + hi * dk + col] / present as f64;
                }
            }
            let d_v = c.p.transpose() * &d_out;
            let mut d_p = &d_out * c.v.transpose();
            if d_entropy != 0.0 {
                for (dp, &p) in d_p.iter_mut().zip(c.p.iter()) {
                    if p > 0.0 {
                        *dp -= d_entropy * (p.ln() + 1.0);
                    }
                }
            }
            let mut d_s = DMatrix::zeros(m, m);
            for r in 0..m {
                let dot: f64 = (0..m).map(|j| c.p[(r, j)] * d_p[(r, j)]).sum();
                for j in 0..m {
                    d_s[(r, j)] = c.p[(r, j)] * (d_p[(r, j)] - dot);
                }
            }
            let d_q = &d_s * &c.k * inv_sqrt_dk;
            let d_k = d_s.transpose() * &c.q * inv_sqrt_dk;
            let g = &mut grad.proj[hi];
            g.w_q += x.transpose() * d_q;
            g.w_k += x.transpose() * d_k;
            g.w_v += x.transpose() * d_v;
        }
        Ok(loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub heads: usize,
    pub d_k: usize,
    pub loss: LossWeights,
    /// Stop after this many epochs without a better validation score.
    pub patience: usize,
    /// Whether the attention projections are updated or stay at their seeded
    /// initialization.
    pub train_projections: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.05,
            seed: 0,
            heads: 2,
            d_k: 16,
            loss: LossWeights::bce_only(),
            patience: 60,
            train_projections: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: FusionModel,
    /// Training loss after each epoch (index 0 is the initial loss).
    pub history: Vec<f64>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    /// True when step halving could no longer decrease the loss.
    pub plateaued: bool,
}

const MAX_HALVINGS: usize = 40;

/// Full-batch gradient descent. A step that would increase the training loss
/// is retried at half the rate. With a validation set, the parameters with the
/// best validation AUC (ties broken by lower validation loss) are returned.
pub fn train_head(train: &[FusionInput], val: &[FusionInput], cfg: &TrainConfig) -> Result<TrainOutcome> {
    ensure!(!train.is_empty(), InvalidParameter, "empty training set");
    let pos = train.iter().filter(|x| x.label == 1).count();
    ensure!(
        pos >= 2 && train.len() - pos >= 2,
        Degenerate,
        "training needs at least two subjects per class ({pos} positive of {})",
        train.len()
    );
    ensure!(cfg.lr >= 0.0 && cfg.lr.is_finite(), InvalidParameter, "learning rate must be >= 0");
    let tokens = train[0].tokens.len();
    let d_model = train[0]
        .tokens
        .iter()
        .flatten()
        .map(Vec::len)
        .next()
        .ok_or_else(|| Error::InvalidParameter("first subject has no tokens".into()))?;
    let mut model = FusionModel::init(tokens, d_model, cfg.d_k, cfg.heads, cfg.seed)?;
    let n_proj = model.n_parameters() - model.head.dim() - 1;

    let val_score = |m: &FusionModel| -> Result<(f64, f64)> {
        let scores = val.iter().map(|x| m.predict(x)).collect::<Result<Vec<_>>>()?;
        let labels: Vec<u8> = val.iter().map(|x| x.label).collect();
        Ok((auc(&scores, &labels).unwrap_or(0.5), m.loss(val, &cfg.loss)?))
    };

    let mut loss = model.loss(train, &cfg.loss)?;
    let mut history = vec![loss];
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_val = if val.is_empty() { None } else { Some(val_score(&model)?) };
    let mut rate = cfg.lr;
    let mut plateaued = false;

    for epoch in 1..=cfg.epochs {
        if rate == 0.0 {
            break;
        }
        let (_, grad) = model.loss_and_gradient(train, &cfg.loss)?;
        let mut g = grad.to_vec();
        if !cfg.train_projections {
            g[..n_proj].fill(0.0);
        }
        let params = model.parameters();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = params.iter().zip(&g).map(|(p, d)| p - rate * d).collect();
            let mut candidate = model.clone();
            candidate.set_parameters(&trial)?;
            let l = candidate.loss(train, &cfg.loss)?;
            if l <= loss {
                accepted = Some((candidate, l));
                break;
            }
            rate *= 0.5;
        }
        let Some((next, l)) = accepted else {
            plateaued = true;
            break;
        };
        model = next;
        loss = l;
        history.push(loss);
        rate = (rate * 1.25).min(cfg.lr);

        match best_val {
            None => {
                best = model.clone();
                best_epoch = epoch;
            }
            Some((best_auc, best_loss)) => {
                let (a, vl) = val_score(&model)?;
                if a > best_auc || (a == best_auc && vl < best_loss) {
                    best_val = Some((a, vl));
                    best = model.clone();
                    best_epoch = epoch;
                } else if epoch - best_epoch >= cfg.patience {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
        plateaued,
    })
}

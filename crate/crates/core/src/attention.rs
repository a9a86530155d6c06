//! Scaled dot-product attention, multi-head cross-modal fusion and the
//! attention-entropy biomarker.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Result};

/// Query/key/value projections of one head, each `d_model x d_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadProjection {
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    pub heads: Vec<HeadProjection>,
}

impl ProjectionSet {
    pub fn new(heads: Vec<HeadProjection>) -> Result<Self> {
        ensure!(!heads.is_empty(), InvalidParameter, "need at least one head");
        let (dm, dk) = heads[0].w_q.shape();
        ensure!(dm > 0 && dk > 0, InvalidParameter, "projection dimensions must be positive");
        for h in &heads {
            ensure!(
                h.w_q.shape() == (dm, dk) && h.w_k.shape() == (dm, dk) && h.w_v.shape() == (dm, dk),
                Shape,
                "all projections must be {dm}x{dk}"
            );
        }
        Ok(Self { heads })
    }

    /// Gaussian init with standard deviation `1/sqrt(d_model)`.
    pub fn random(d_model: usize, d_k: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        ensure!(d_model > 0 && d_k > 0 && heads > 0, InvalidParameter, "dimensions must be positive");
        let scale = 1.0 / (d_model as f64).sqrt();
        let mut draw = || DMatrix::from_fn(d_model, d_k, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        Self::new(
            (0..heads)
                .map(|_| HeadProjection {
                    w_q: draw(),
                    w_k: draw(),
                    w_v: draw(),
                })
                .collect(),
        )
    }

    pub fn zeros(d_model: usize, d_k: usize, heads: usize) -> Result<Self> {
        let z = DMatrix::zeros(d_model, d_k);
        Self::new(vec![
            HeadProjection {
                w_q: z.clone(),
                w_k: z.clone(),
                w_v: z,
            };
            heads
        ])
    }

    pub fn d_model(&self) -> usize {
        self.heads[0].w_q.nrows()
    }

    pub fn d_k(&self) -> usize {
        self.heads[0].w_q.ncols()
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }
}

/// Attention values and the row-stochastic weights that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub values: DMatrix<f64>,
    pub weights: DMatrix<f64>,
}

impl AttentionOutput {
    /// Weights as CSV: a `query,key_1..key_n` header then one row per query.
    pub fn weights_to_csv(&self, key_labels: &[String]) -> String {
        let mut s = String::from("query");
        for l in key_labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for r in 0..self.weights.nrows() {
            let _ = write!(s, "{r}");
            for c in 0..self.weights.ncols() {
                let _ = write!(s, ",{}", self.weights[(r, c)]);
            }
            s.push('\n');
        }
        s
    }
}

/// Row-wise softmax with max subtraction. Masked-out columns (`false`) get
/// weight exactly 0; a row with every column masked is all zeros.
pub fn softmax_rows(logits: &DMatrix<f64>, key_mask: Option<&[bool]>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(logits.nrows(), logits.ncols());
    let keep = |c: usize| key_mask.is_none_or(|m| m[c]);
    for r in 0..logits.nrows() {
        let max = (0..logits.ncols())
            .filter(|&c| keep(c))
            .map(|c| logits[(r, c)])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut z = 0.0;
        for c in 0..logits.ncols() {
            if keep(c) {
                let e = (logits[(r, c)] - max).exp();
                out[(r, c)] = e;
                z += e;
            }
        }
        for c in 0..logits.ncols() {
            out[(r, c)] /= z;
        }
    }
    out
}

/// `softmax(Q Kᵀ / sqrt(d_k)) V`.
pub fn scaled_dot_attention(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<AttentionOutput> {
    masked_attention(q, k, v, None)
}

/// Attention where keys with `key_mask[j] == false` receive `-inf` logits.
pub fn masked_attention(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    key_mask: Option<&[bool]>,
) -> Result<AttentionOutput> {
    ensure!(
        q.ncols() == k.ncols(),
        Shape,
        "Q has {} columns, K has {}",
        q.ncols(),
        k.ncols()
    );
    ensure!(k.nrows() == v.nrows(), Shape, "K has {} rows, V has {}", k.nrows(), v.nrows());
    ensure!(q.ncols() > 0 && k.nrows() > 0, Shape, "empty attention operands");
    if let Some(m) = key_mask {
        ensure!(m.len() == k.nrows(), Shape, "mask has {} entries for {} keys", m.len(), k.nrows());
    }
    let logits = q * k.transpose() / (q.ncols() as f64).sqrt();
    let weights = softmax_rows(&logits, key_mask);
    Ok(AttentionOutput {
        values: &weights * v,
        weights,
    })
}

/// Mean over query rows of the row entropies `-Σ α ln α` (with `0 ln 0 = 0`).
pub fn attention_entropy(out: &AttentionOutput) -> f64 {
    row_entropy_mean(&out.weights)
}

pub(crate) fn row_entropy_mean(w: &DMatrix<f64>) -> f64 {
    if w.nrows() == 0 {
        return 0.0;
    }
    let total: f64 = (0..w.nrows())
        .map(|r| {
            -(0..w.ncols())
                .map(|c| w[(r, c)])
                .filter(|&a| a > 0.0)
                .map(|a| a * a.ln())
                .sum::<f64>()
        })
        .sum();
    total / w.nrows() as f64
}

/// Fused subject representation: raw modality embeddings followed by the
/// pooled attention output.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedEmbedding {
    pub vector: Vec<f64>,
    /// Which modality tokens were present.
    pub mask: Vec<bool>,
}

impl FusedEmbedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Total fused width for `tokens` modalities.
pub fn fused_dim(tokens: usize, proj: &ProjectionSet) -> usize {
    tokens * proj.d_model() + proj.n_heads() * proj.d_k()
}

/// Stacks the modality embeddings as tokens (missing ones as zero rows with a
/// masked key), runs multi-head self-attention across them, and returns the
/// fused vector plus the attention output.
///
/// In the returned [`AttentionOutput`] the values are the head outputs
/// concatenated column-wise (`M x heads·d_k`) and the weights are the head
/// weight matrices stacked row-wise (`heads·M x M`), so every row is still one
/// query's distribution over modality keys.
pub fn cross_modal_fuse(
    embeddings: &[Option<Vec<f64>>],
    proj: &ProjectionSet,
) -> Result<(FusedEmbedding, AttentionOutput)> {
    let m = embeddings.len();
    let d = proj.d_model();
    ensure!(m > 0, InvalidParameter, "no modality embeddings");
    let mask: Vec<bool> = embeddings.iter().map(Option::is_some).collect();
    ensure!(mask.iter().any(|&p| p), InvalidParameter, "every modality is missing");
    let mut x = DMatrix::zeros(m, d);
    for (i, e) in embeddings.iter().enumerate() {
        if let Some(e) = e {
            ensure!(e.len() == d, Shape, "token {i} has width {}, expected {d}", e.len());
            for (j, v) in e.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
    }

    let dk = proj.d_k();
    let h = proj.n_heads();
    let mut values = DMatrix::zeros(m, h * dk);
    let mut weights = DMatrix::zeros(h * m, m);
    for (hi, head) in proj.heads.iter().enumerate() {
        let out = masked_attention(&(&x * &head.w_q), &(&x * &head.w_k), &(&x * &head.w_v), Some(&mask))?;
        values.view_mut((0, hi * dk), (m, dk)).copy_from(&out.values);
        weights.view_mut((hi * m, 0), (m, m)).copy_from(&out.weights);
    }

    let present = mask.iter().filter(|&&p| p).count() as f64;
    let mut vector: Vec<f64> = Vec::with_capacity(fused_dim(m, proj));
    for i in 0..m {
        vector.extend(x.row(i).iter());
    }
    for c in 0..h * dk {
        let pooled: f64 = (0..m).filter(|&i| mask[i]).map(|i| values[(i, c)]).sum::<f64>() / present;
        vector.push(pooled);
    }
    Ok((FusedEmbedding { vector, mask }, AttentionOutput { values, weights }))
}

//! Forward passes of the small building blocks used by the modality
//! extractors. Feature maps are `channels x time` matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Result};
use crate::graphdiff::Activation;

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Bank of 1-D kernels; kernel `o` is an `in_channels x width` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub kernels: Vec<DMatrix<f64>>,
    pub bias: Vec<f64>,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(kernels: Vec<DMatrix<f64>>, bias: Vec<f64>, stride: usize) -> Result<Self> {
        ensure!(!kernels.is_empty(), InvalidParameter, "conv needs at least one kernel");
        ensure!(stride >= 1, InvalidParameter, "stride must be >= 1");
        let shape = kernels[0].shape();
        ensure!(shape.0 > 0 && shape.1 > 0, InvalidParameter, "empty kernel");
        ensure!(kernels.iter().all(|k| k.shape() == shape), Shape, "kernels differ in shape");
        ensure!(bias.len() == kernels.len(), Shape, "{} biases for {} kernels", bias.len(), kernels.len());
        Ok(Self { kernels, bias, stride })
    }

    /// He-style Gaussian kernels, zero bias.
    pub fn random(in_channels: usize, out_channels: usize, width: usize, stride: usize, rng: &mut impl Rng) -> Result<Self> {
        let scale = (2.0 / (in_channels * width) as f64).sqrt();
        let kernels = (0..out_channels).map(|_| gaussian(in_channels, width, scale, rng)).collect();
        Self::new(kernels, vec![0.0; out_channels], stride)
    }

    pub fn width(&self) -> usize {
        self.kernels[0].ncols()
    }

    pub fn in_channels(&self) -> usize {
        self.kernels[0].nrows()
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.len()
    }

    pub fn output_len(&self, t: usize) -> usize {
        (t - self.width()) / self.stride + 1
    }
}

/// Valid-mode cross-correlation plus bias, then `activation`. Output length
/// is `floor((T - k) / stride) + 1`.
pub fn conv1d_forward(x: &DMatrix<f64>, conv: &Conv1d, activation: Activation) -> Result<DMatrix<f64>> {
    let (c, t) = x.shape();
    let k = conv.width();
    ensure!(c == conv.in_channels(), Shape, "input has {c} channels, conv expects {}", conv.in_channels());
    ensure!(k <= t, InvalidParameter, "kernel width {k} exceeds input length {t}");
    let len = conv.output_len(t);
    let mut out = DMatrix::zeros(conv.out_channels(), len);
    for (o, kernel) in conv.kernels.iter().enumerate() {
        for p in 0..len {
            let start = p * conv.stride;
            let mut acc = conv.bias[o];
            for ci in 0..c {
                for j in 0..k {
                    acc += kernel[(ci, j)] * x[(ci, start + j)];
                }
            }
            out[(o, p)] = activation.apply(acc);
        }
    }
    Ok(out)
}

/// Windowed maxima along time.
pub fn maxpool_forward(x: &DMatrix<f64>, window: usize, stride: usize) -> Result<DMatrix<f64>> {
    pool(x, window, stride, |s| s.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Windowed means along time.
pub fn avgpool_forward(x: &DMatrix<f64>, window: usize, stride: usize) -> Result<DMatrix<f64>> {
    pool(x, window, stride, |s| s.iter().sum::<f64>() / s.len() as f64)
}

fn pool(x: &DMatrix<f64>, window: usize, stride: usize, f: impl Fn(&[f64]) -> f64) -> Result<DMatrix<f64>> {
    let (c, t) = x.shape();
    ensure!(window >= 1 && stride >= 1, InvalidParameter, "pool window and stride must be >= 1");
    ensure!(window <= t, InvalidParameter, "pool window {window} exceeds length {t}");
    let len = (t - window) / stride + 1;
    let mut buf = vec![0.0; window];
    Ok(DMatrix::from_fn(c, len, |ci, p| {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = x[(ci, p * stride + j)];
        }
        f(&buf)
    }))
}

/// Softmax-weighted average over time with scores `q · x_t / sqrt(C)`.
pub fn attention_pool(x: &DMatrix<f64>, query: &[f64]) -> Result<Vec<f64>> {
    let (c, t) = x.shape();
    ensure!(query.len() == c, Shape, "query has {} entries for {c} channels", query.len());
    ensure!(t > 0, Shape, "empty feature map");
    let q = DVector::from_column_slice(query);
    let scores = x.transpose() * q / (c as f64).sqrt();
    let max = scores.max();
    let w = scores.map(|s| (s - max).exp());
    let w = &w / w.sum();
    Ok((x * w).iter().copied().collect())
}

/// One LSTM direction. Gate rows are stacked `[input, forget, cell, output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// `4H x D`
    pub w_ih: DMatrix<f64>,
    /// `4H x H`
    pub w_hh: DMatrix<f64>,
    /// `4H`
    pub bias: DVector<f64>,
}

impl LstmWeights {
    pub fn new(w_ih: DMatrix<f64>, w_hh: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        let h4 = w_hh.nrows();
        ensure!(h4 > 0 && h4.is_multiple_of(4), Shape, "w_hh must have 4H rows");
        ensure!(w_hh.ncols() == h4 / 4, Shape, "w_hh must be 4H x H");
        ensure!(w_ih.nrows() == h4, Shape, "w_ih must have 4H rows");
        ensure!(bias.len() == h4, Shape, "bias must have 4H entries");
        Ok(Self { w_ih, w_hh, bias })
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: DMatrix::zeros(4 * hidden, input),
            w_hh: DMatrix::zeros(4 * hidden, hidden),
            bias: DVector::zeros(4 * hidden),
        }
    }

    /// Uniform `±1/sqrt(H)` weights with the forget-gate bias set to
    /// `forget_bias`.
    pub fn random(input: usize, hidden: usize, forget_bias: f64, rng: &mut impl Rng) -> Self {
        let s = 1.0 / (hidden as f64).sqrt();
        let mut u = |r, c| DMatrix::from_fn(r, c, |_, _| rng.random_range(-s..s));
        let w_ih = u(4 * hidden, input);
        let w_hh = u(4 * hidden, hidden);
        let mut bias = DVector::zeros(4 * hidden);
        bias.rows_mut(hidden, hidden).fill(forget_bias);
        Self { w_ih, w_hh, bias }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.ncols()
    }

    fn run<'a>(&self, steps: impl Iterator<Item = nalgebra::DVectorView<'a, f64>>) -> DVector<f64> {
        let hd = self.hidden();
        let mut h = DVector::zeros(hd);
        let mut c = DVector::<f64>::zeros(hd);
        for x in steps {
            let z = &self.w_ih * x + &self.w_hh * &h + &self.bias;
            for j in 0..hd {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[hd + j]);
                let g = z[2 * hd + j].tanh();
                let o = sigmoid(z[3 * hd + j]);
                c[j] = f * c[j] + i * g;
                h[j] = o * c[j].tanh();
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub forward: LstmWeights,
    pub backward: LstmWeights,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Runs both directions over a time-major `T x D` sequence and returns the
/// final hidden states `[forward, backward]`.
pub fn bilstm_forward(x: &DMatrix<f64>, w: &BiLstm) -> Result<Vec<f64>> {
    let (t, d) = x.shape();
    ensure!(t > 0, Shape, "empty sequence");
    ensure!(
        w.forward.input() == d && w.backward.input() == d,
        Shape,
        "sequence width {d} does not match LSTM input width"
    );
    let xt = x.transpose();
    let fwd = w.forward.run((0..t).map(|i| xt.column(i)));
    let bwd = w.backward.run((0..t).rev().map(|i| xt.column(i)));
    Ok(fwd.iter().chain(bwd.iter()).copied().collect())
}

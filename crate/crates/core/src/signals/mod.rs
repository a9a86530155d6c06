//! Multichannel signal windows and their preprocessing.
//!
//! Every operation here is a pure function of its input window. Values are
//! stored channel-major: one row per channel, one column per sample.

mod filter;
pub mod io;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::manifold::SpdMatrix;

pub use filter::bandpass_filter;
pub use synthetic::{generate_synthetic_cohort, ModalityTiming, SyntheticCohortSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "EEG")]
    Eeg,
    #[serde(rename = "ECG")]
    Ecg,
    #[serde(rename = "Resp")]
    Resp,
    #[serde(rename = "SpO2")]
    SpO2,
    #[serde(rename = "EMG")]
    Emg,
    #[serde(rename = "fMRI-BOLD")]
    FmriBold,
}

impl Modality {
    pub const ALL: [Modality; 6] = [
        Modality::Eeg,
        Modality::Ecg,
        Modality::Resp,
        Modality::SpO2,
        Modality::Emg,
        Modality::FmriBold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Eeg => "EEG",
            Modality::Ecg => "ECG",
            Modality::Resp => "Resp",
            Modality::SpO2 => "SpO2",
            Modality::Emg => "EMG",
            Modality::FmriBold => "fMRI-BOLD",
        }
    }

    pub fn index(self) -> usize {
        Modality::ALL.iter().position(|&m| m == self).unwrap()
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown modality '{s}'")))
    }
}

/// One modality's multichannel recording at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesWindow {
    modality: Modality,
    sample_rate: f64,
    values: DMatrix<f64>,
}

impl TimeSeriesWindow {
    pub fn new(modality: Modality, sample_rate: f64, values: DMatrix<f64>) -> Result<Self> {
        ensure!(
            sample_rate > 0.0 && sample_rate.is_finite(),
            InvalidParameter,
            "sample rate must be positive, got {sample_rate}"
        );
        ensure!(
            values.nrows() > 0 && values.ncols() > 0,
            Shape,
            "window must have at least one channel and one sample"
        );
        Ok(Self {
            modality,
            sample_rate,
            values,
        })
    }

    pub fn from_rows(modality: Modality, sample_rate: f64, rows: &[Vec<f64>]) -> Result<Self> {
        ensure!(!rows.is_empty(), Shape, "no channels");
        let t = rows[0].len();
        ensure!(
            rows.iter().all(|r| r.len() == t),
            Shape,
            "channels have unequal lengths"
        );
        let values = DMatrix::from_fn(rows.len(), t, |i, j| rows[i][j]);
        Self::new(modality, sample_rate, values)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.row(c).iter().copied().collect()
    }

    pub fn duration(&self) -> f64 {
        self.samples() as f64 / self.sample_rate
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn with_values(&self, values: DMatrix<f64>) -> Self {
        Self {
            modality: self.modality,
            sample_rate: self.sample_rate,
            values,
        }
    }
}

/// Binary-labelled subject with one window per modality (or `None` when the
/// modality was not recorded).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub subject_id: String,
    pub windows: Vec<(Modality, Option<TimeSeriesWindow>)>,
    pub label: u8,
}

impl LabeledRecord {
    pub fn window(&self, m: Modality) -> Option<&TimeSeriesWindow> {
        self.windows
            .iter()
            .find(|(mm, _)| *mm == m)
            .and_then(|(_, w)| w.as_ref())
    }
}

/// Result of z-scoring: the normalized window plus the indices of constant
/// channels that were zeroed out.
#[derive(Debug, Clone)]
pub struct ZScored {
    pub window: TimeSeriesWindow,
    pub degenerate_channels: Vec<usize>,
}

/// Per-channel z-score with the population standard deviation.
pub fn zscore_normalize(w: &TimeSeriesWindow) -> Result<ZScored> {
    ensure!(
        w.samples() >= 2,
        InvalidParameter,
        "z-score needs at least 2 samples, got {}",
        w.samples()
    );
    let n = w.samples() as f64;
    let mut out = w.values.clone();
    let mut degenerate = Vec::new();
    for c in 0..w.channels() {
        let row = w.values.row(c);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd <= 1e-12 * (1.0 + mean.abs()) {
            degenerate.push(c);
            out.row_mut(c).fill(0.0);
            continue;
        }
        for v in out.row_mut(c).iter_mut() {
            *v = (*v - mean) / sd;
        }
    }
    if !degenerate.is_empty() {
        log::warn!(
            "{}: constant channel(s) {:?} zeroed during z-score",
            w.modality,
            degenerate
        );
    }
    Ok(ZScored {
        window: w.with_values(out),
        degenerate_channels: degenerate,
    })
}

/// Linear-interpolation resampling to `target_rate`.
///
/// Output sample `j` sits at time `j / target_rate`; positions beyond the last
/// input sample hold the final value.
pub fn resample(w: &TimeSeriesWindow, target_rate: f64) -> Result<TimeSeriesWindow> {
    ensure!(
        target_rate > 0.0 && target_rate.is_finite(),
        InvalidParameter,
        "target rate must be positive, got {target_rate}"
    );
    ensure!(
        w.samples() >= 2,
        InvalidParameter,
        "resampling needs at least 2 samples"
    );
    let t_in = w.samples();
    let t_out = ((t_in as f64) * target_rate / w.sample_rate).round() as usize;
    ensure!(t_out >= 1, InvalidParameter, "target rate yields an empty window");
    let ratio = w.sample_rate / target_rate;
    let mut out = DMatrix::zeros(w.channels(), t_out);
    for j in 0..t_out {
        let pos = j as f64 * ratio;
        let i0 = pos.floor() as usize;
        let (i0, frac) = if i0 >= t_in - 1 {
            (t_in - 1, 0.0)
        } else {
            (i0, pos - i0 as f64)
        };
        for c in 0..w.channels() {
            let a = w.values[(c, i0)];
            out[(c, j)] = if frac == 0.0 {
                a
            } else {
                a + frac * (w.values[(c, i0 + 1)] - a)
            };
        }
    }
    Ok(TimeSeriesWindow {
        modality: w.modality,
        sample_rate: target_rate,
        values: out,
    })
}

/// Window start offsets for `floor((T - win_len) / stride) + 1` windows.
fn window_starts(t: usize, win_len: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..=(t - win_len) / stride).map(move |k| k * stride)
}

fn check_windowing(w: &TimeSeriesWindow, win_len: usize, stride: usize, eps: f64) -> Result<()> {
    ensure!(win_len >= 2, InvalidParameter, "window length must be >= 2");
    ensure!(
        win_len <= w.samples(),
        InvalidParameter,
        "window length {win_len} exceeds {} samples",
        w.samples()
    );
    ensure!(stride >= 1, InvalidParameter, "stride must be >= 1");
    ensure!(
        eps > 0.0 && eps.is_finite(),
        InvalidParameter,
        "shrinkage must be positive, got {eps}"
    );
    Ok(())
}

fn window_covariance(w: &TimeSeriesWindow, start: usize, win_len: usize, eps: f64) -> Result<SpdMatrix> {
    let c = w.channels();
    let block = w.values.columns(start, win_len);
    let means: Vec<f64> = (0..c).map(|i| block.row(i).sum() / win_len as f64).collect();
    let mut cov = DMatrix::zeros(c, c);
    for i in 0..c {
        for j in i..c {
            let mut s = 0.0;
            for t in 0..win_len {
                s += (block[(i, t)] - means[i]) * (block[(j, t)] - means[j]);
            }
            let v = s / (win_len - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        cov[(i, i)] += eps;
    }
    SpdMatrix::new(cov)
}

/// Shrunk sample covariances over sliding windows.
pub fn sliding_covariance(
    w: &TimeSeriesWindow,
    win_len: usize,
    stride: usize,
    shrink: f64,
) -> Result<Vec<SpdMatrix>> {
    check_windowing(w, win_len, stride, shrink)?;
    window_starts(w.samples(), win_len, stride)
        .map(|s| window_covariance(w, s, win_len, shrink))
        .collect()
}

/// Like [`sliding_covariance`] but skips windows whose peak absolute amplitude
/// exceeds `max_abs` (simple artifact rejection).
pub fn sliding_covariance_rejecting(
    w: &TimeSeriesWindow,
    win_len: usize,
    stride: usize,
    shrink: f64,
    max_abs: f64,
) -> Result<Vec<SpdMatrix>> {
    check_windowing(w, win_len, stride, shrink)?;
    let mut out = Vec::new();
    for s in window_starts(w.samples(), win_len, stride) {
        let peak = w
            .values
            .columns(s, win_len)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if peak <= max_abs {
            out.push(window_covariance(w, s, win_len, shrink)?);
        }
    }
    Ok(out)
}

/// Default shrinkage `1e-6 * trace / C` of the full-window covariance.
pub fn default_shrinkage(w: &TimeSeriesWindow) -> f64 {
    let n = w.samples() as f64;
    let trace: f64 = (0..w.channels())
        .map(|c| {
            let row = w.values.row(c);
            let mean = row.sum() / n;
            row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        })
        .sum();
    (1e-6 * trace / w.channels() as f64).max(1e-12)
}

/// RR-interval tachogram (seconds) from upward threshold crossings of one
/// ECG channel.
pub fn rr_tachogram(w: &TimeSeriesWindow, channel: usize, threshold: f64) -> Result<Vec<f64>> {
    ensure!(
        channel < w.channels(),
        Shape,
        "channel {channel} out of range ({} channels)",
        w.channels()
    );
    let row = w.values.row(channel);
    let mut beats = Vec::new();
    for t in 1..row.len() {
        if row[t - 1] < threshold && row[t] >= threshold {
            // interpolate the crossing time between samples
            let frac = (threshold - row[t - 1]) / (row[t] - row[t - 1]);
            beats.push((t as f64 - 1.0 + frac) / w.sample_rate);
        }
    }
    Ok(beats.windows(2).map(|b| b[1] - b[0]).collect())
}

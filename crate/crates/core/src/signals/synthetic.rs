//! Deterministic synthetic multimodal cohorts.
//!
//! Each subject draws from its own ChaCha stream (stream = subject index + 1)
//! so subjects can be generated in any order or in parallel with identical
//! results. Positive subjects carry three planted effects scaled by
//! `effect_size`: a latent slow drive shared by EEG channels and the ECG
//! beat timing, slower SpO2 recovery after desaturations, and larger
//! brainstem BOLD fluctuations.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LabeledRecord, Modality, TimeSeriesWindow};
use crate::error::{ensure, Result};
use crate::graphdiff::BRAINSTEM_REGIONS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityTiming {
    pub modality: Modality,
    pub rate: f64,
    pub duration: f64,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCohortSpec {
    pub n_subjects: usize,
    pub positive_fraction: f64,
    pub effect_size: f64,
    pub seed: u64,
    pub timings: Vec<ModalityTiming>,
}

impl Default for SyntheticCohortSpec {
    fn default() -> Self {
        let t = |modality, rate, duration, channels| ModalityTiming {
            modality,
            rate,
            duration,
            channels,
        };
        Self {
            n_subjects: 60,
            positive_fraction: 0.5,
            effect_size: 2.0,
            seed: 7,
            timings: vec![
                t(Modality::Eeg, 512.0, 5.0, 4),
                t(Modality::Ecg, 256.0, 10.0, 1),
                t(Modality::Resp, 16.0, 32.0, 1),
                t(Modality::SpO2, 16.0, 32.0, 1),
                t(Modality::Emg, 256.0, 5.0, 1),
                t(Modality::FmriBold, 1.0, 256.0, 16),
            ],
        }
    }
}

impl SyntheticCohortSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_subjects >= 2, InvalidParameter, "cohort needs at least 2 subjects");
        ensure!(
            (0.0..=1.0).contains(&self.positive_fraction),
            InvalidParameter,
            "positive fraction must be in [0, 1]"
        );
        ensure!(
            self.effect_size >= 0.0 && self.effect_size.is_finite(),
            InvalidParameter,
            "effect size must be >= 0"
        );
        for t in &self.timings {
            ensure!(
                t.rate > 0.0 && t.rate.is_finite(),
                InvalidParameter,
                "{}: rate must be positive",
                t.modality
            );
            ensure!(
                t.duration > 0.0 && t.channels >= 1,
                InvalidParameter,
                "{}: duration and channel count must be positive",
                t.modality
            );
            ensure!(
                (t.rate * t.duration).round() >= 2.0,
                InvalidParameter,
                "{}: fewer than 2 samples",
                t.modality
            );
        }
        Ok(())
    }

    pub fn positive_count(&self) -> usize {
        (self.n_subjects as f64 * self.positive_fraction).round() as usize
    }

    fn timing(&self, m: Modality) -> Option<&ModalityTiming> {
        self.timings.iter().find(|t| t.modality == m)
    }
}

pub fn subject_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Labels with exactly `positive_count()` positives, shuffled by the seed.
fn assign_labels(spec: &SyntheticCohortSpec) -> Vec<u8> {
    let mut labels = vec![0u8; spec.n_subjects];
    labels[..spec.positive_count()].fill(1);
    labels.shuffle(&mut subject_rng(spec.seed, 0));
    labels
}

pub fn generate_synthetic_cohort(spec: &SyntheticCohortSpec) -> Result<Vec<LabeledRecord>> {
    spec.validate()?;
    let labels = assign_labels(spec);
    (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| generate_subject(spec, i, labels[i]))
        .collect()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Resonant AR(2) process at `freq` Hz, scaled to unit sample variance.
fn ar2(rng: &mut ChaCha8Rng, n: usize, freq: f64, fs: f64, radius: f64) -> Vec<f64> {
    let a1 = 2.0 * radius * (2.0 * PI * freq / fs).cos();
    let a2 = -radius * radius;
    let burn = 200;
    let mut x = vec![0.0; n + burn];
    for t in 2..n + burn {
        x[t] = a1 * x[t - 1] + a2 * x[t - 2] + gauss(rng);
    }
    let mut x = x.split_off(burn);
    unit_variance(&mut x);
    x
}

fn unit_variance(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    for v in x.iter_mut() {
        *v = (*v - mean) / sd;
    }
}

/// Linear interpolation of a uniformly sampled series at time `t`.
fn interp(series: &[f64], fs: f64, t: f64) -> f64 {
    let pos = (t * fs).max(0.0);
    let i = pos.floor() as usize;
    if i + 1 >= series.len() {
        return *series.last().unwrap();
    }
    let f = pos - i as f64;
    series[i] * (1.0 - f) + series[i + 1] * f
}

const DRIVE_RATE: f64 = 64.0;
const DRIVE_FREQ: f64 = 1.5;

fn generate_subject(spec: &SyntheticCohortSpec, index: usize, label: u8) -> Result<LabeledRecord> {
    let mut rng = subject_rng(spec.seed, index as u64 + 1);
    let effect = spec.effect_size * label as f64;

    let horizon = spec
        .timings
        .iter()
        .map(|t| t.duration)
        .fold(0.0f64, f64::max);
    let drive = ar2(
        &mut rng,
        (horizon * DRIVE_RATE).ceil() as usize + 2,
        DRIVE_FREQ,
        DRIVE_RATE,
        0.97,
    );

    let mut windows = Vec::with_capacity(Modality::ALL.len());
    for m in Modality::ALL {
        let Some(timing) = spec.timing(m) else {
            windows.push((m, None));
            continue;
        };
        let n = (timing.rate * timing.duration).round() as usize;
        let rows = match m {
            Modality::Eeg => eeg(&mut rng, timing, n, &drive, effect),
            Modality::Ecg => ecg(&mut rng, timing, n, &drive, effect),
            Modality::Resp => resp(&mut rng, timing, n),
            Modality::SpO2 => spo2(&mut rng, timing, n, effect),
            Modality::Emg => emg(&mut rng, timing, n),
            Modality::FmriBold => bold(&mut rng, timing, n, effect),
        };
        let values = DMatrix::from_fn(timing.channels, n, |c, t| rows[c][t]);
        windows.push((m, Some(TimeSeriesWindow::new(m, timing.rate, values)?)));
    }
    Ok(LabeledRecord {
        subject_id: format!("sub-{:03}", index + 1),
        windows,
        label,
    })
}

fn eeg(rng: &mut ChaCha8Rng, t: &ModalityTiming, n: usize, drive: &[f64], effect: f64) -> Vec<Vec<f64>> {
    let alpha_freq = 9.0 + 2.0 * rng.random::<f64>();
    (0..t.channels)
        .map(|_| {
            let base = ar2(rng, n, alpha_freq, t.rate, 0.985);
            let mix = 0.6 + 0.4 * rng.random::<f64>();
            base.iter()
                .enumerate()
                .map(|(i, b)| {
                    let coupled = effect * mix * interp(drive, DRIVE_RATE, i as f64 / t.rate);
                    20.0 * (b + coupled + 0.3 * gauss(rng))
                })
                .collect()
        })
        .collect()
}

fn ecg(rng: &mut ChaCha8Rng, t: &ModalityTiming, n: usize, drive: &[f64], effect: f64) -> Vec<Vec<f64>> {
    let duration = n as f64 / t.rate;
    let mean_rr = 0.75 + 0.2 * rng.random::<f64>();
    let mut beats = Vec::new();
    let mut tb = 0.2 * rng.random::<f64>();
    while tb < duration + 1.0 {
        beats.push(tb);
        let rr = mean_rr * (1.0 + 0.03 * gauss(rng) + 0.06 * effect * interp(drive, DRIVE_RATE, tb));
        tb += rr.max(0.3);
    }
    (0..t.channels)
        .map(|_| {
            (0..n)
                .map(|i| {
                    let time = i as f64 / t.rate;
                    let wave: f64 = beats
                        .iter()
                        .filter(|&&b| (time - b).abs() < 0.6)
                        .map(|&b| {
                            let d = time - b;
                            (-(d / 0.012).powi(2)).exp() + 0.25 * (-((d - 0.25) / 0.05).powi(2)).exp()
                        })
                        .sum();
                    wave + 0.03 * gauss(rng)
                })
                .collect()
        })
        .collect()
}

fn resp(rng: &mut ChaCha8Rng, t: &ModalityTiming, n: usize) -> Vec<Vec<f64>> {
    let freq = 0.2 + 0.1 * rng.random::<f64>();
    (0..t.channels)
        .map(|_| {
            let phase = 2.0 * PI * rng.random::<f64>();
            (0..n)
                .map(|i| (2.0 * PI * freq * i as f64 / t.rate + phase).sin() + 0.2 * gauss(rng))
                .collect()
        })
        .collect()
}

fn spo2(rng: &mut ChaCha8Rng, t: &ModalityTiming, n: usize, effect: f64) -> Vec<Vec<f64>> {
    let duration = n as f64 / t.rate;
    let tau = 2.0 * (1.0 + 0.75 * effect);
    (0..t.channels)
        .map(|_| {
            let events: Vec<(f64, f64)> = (0..2)
                .map(|k| {
                    let onset = duration * (0.1 + 0.45 * k as f64 + 0.2 * rng.random::<f64>());
                    let depth = 3.0 + 2.0 * rng.random::<f64>();
                    (onset, depth)
                })
                .collect();
            (0..n)
                .map(|i| {
                    let time = i as f64 / t.rate;
                    let dip: f64 = events
                        .iter()
                        .map(|&(onset, depth)| {
                            let d = time - onset;
                            if d < 0.0 {
                                0.0
                            } else if d < 2.0 {
                                depth * d / 2.0
                            } else {
                                depth * (-(d - 2.0) / tau).exp()
                            }
                        })
                        .sum();
                    97.0 - dip + 0.15 * gauss(rng)
                })
                .collect()
        })
        .collect()
}

fn emg(rng: &mut ChaCha8Rng, t: &ModalityTiming, n: usize) -> Vec<Vec<f64>> {
    (0..t.channels)
        .map(|_| {
            let bursts: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.random::<f64>() * n as f64 / t.rate, 0.1 + 0.2 * rng.random::<f64>()))
                .collect();
            (0..n)
                .map(|i| {
                    let time = i as f64 / t.rate;
                    let env: f64 = bursts
                        .iter()
                        .map(|&(c, w)| (-((time - c) / w).powi(2)).exp())
                        .sum();
                    (0.1 + env) * gauss(rng)
                })
                .collect()
        })
        .collect()
}

fn bold(rng: &mut ChaCha8Rng, t: &ModalityTiming, n: usize, effect: f64) -> Vec<Vec<f64>> {
    const FACTORS: usize = 3;
    let latent: Vec<Vec<f64>> = (0..FACTORS)
        .map(|_| {
            let mut x = vec![0.0; n];
            for i in 1..n {
                x[i] = 0.9 * x[i - 1] + gauss(rng);
            }
            unit_variance(&mut x);
            x
        })
        .collect();
    let brainstem_start = t.channels.saturating_sub(BRAINSTEM_REGIONS);
    (0..t.channels)
        .map(|r| {
            let loadings: Vec<f64> = (0..FACTORS).map(|_| gauss(rng)).collect();
            let gain = if r >= brainstem_start { 1.0 + 0.5 * effect } else { 1.0 };
            (0..n)
                .map(|i| {
                    let s: f64 = (0..FACTORS).map(|f| loadings[f] * latent[f][i]).sum();
                    100.0 + gain * (0.5 * s + 0.3 * gauss(rng))
                })
                .collect()
        })
        .collect()
}

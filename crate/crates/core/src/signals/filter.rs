use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::TimeSeriesWindow;
use crate::error::{ensure, Result};

// Pole-pair Q factors of a 4th-order Butterworth prototype.
const BUTTERWORTH4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_6];

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn lowpass(cutoff: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / fs;
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0],
            a: [-2.0 * c / a0, (1.0 - alpha) / a0],
        }
    }

    fn highpass(cutoff: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / fs;
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0],
            a: [-2.0 * c / a0, (1.0 - alpha) / a0],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state for a constant input `u` at steady state.
    fn steady_state(&self, u: f64) -> [f64; 2] {
        let g = self.dc_gain();
        [(g - self.b[0]) * u, (self.b[2] - self.a[1] * g) * u]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z[0];
            z[0] = self.b[1] * input - self.a[0] * y + z[1];
            z[1] = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

fn cascade_pass(sections: &[Biquad], x: &mut [f64]) {
    let mut level = x[0];
    for s in sections {
        let z = s.steady_state(level);
        s.run(x, z);
        level *= s.dc_gain();
    }
}

fn filtfilt(sections: &[Biquad], signal: &[f64], padlen: usize) -> Vec<f64> {
    let n = signal.len();
    let pad = padlen.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let first = signal[0];
    let last = signal[n - 1];
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

    cascade_pass(sections, &mut ext);
    ext.reverse();
    cascade_pass(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Zero-phase band-pass: 4th-order Butterworth high-pass at `low` cascaded
/// with a 4th-order Butterworth low-pass at `high`, run forward and backward.
///
/// Edges use odd reflection padding and steady-state initial conditions, so a
/// constant channel maps to (numerically) zero.
pub fn bandpass_filter(w: &TimeSeriesWindow, low: f64, high: f64) -> Result<TimeSeriesWindow> {
    let fs = w.sample_rate();
    ensure!(
        low > 0.0 && low < high && high < fs / 2.0,
        InvalidParameter,
        "band-pass needs 0 < low < high < nyquist, got low={low}, high={high}, fs={fs}"
    );
    ensure!(w.samples() >= 2, InvalidParameter, "band-pass needs at least 2 samples");

    let mut sections = Vec::with_capacity(4);
    for q in BUTTERWORTH4_Q {
        sections.push(Biquad::highpass(low, fs, q));
    }
    for q in BUTTERWORTH4_Q {
        sections.push(Biquad::lowpass(high, fs, q));
    }
    let padlen = ((3.0 * fs / low).ceil() as usize).max(27);

    let mut out = DMatrix::zeros(w.channels(), w.samples());
    for c in 0..w.channels() {
        let y = filtfilt(&sections, &w.channel(c), padlen);
        for (t, v) in y.into_iter().enumerate() {
            out[(c, t)] = v;
        }
    }
    Ok(w.with_values(out))
}

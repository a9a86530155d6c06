use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

const MIN_SCALE: usize = 16;
const MIN_LEN: usize = 256;

/// Long-memory index of a scalar series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryIndex {
    /// Raw DFA fluctuation exponent (may exceed 1 for non-stationary input).
    pub exponent: f64,
    /// Exponent clamped into the open interval (0, 1).
    pub hurst: f64,
    /// Set when the raw exponent is at least 1 (random-walk-like input).
    pub super_diffusive: bool,
}

/// First-order detrended fluctuation analysis.
///
/// The mean-removed series is integrated into a profile, split into
/// half-overlapping segments at quarter-octave scales `16 .. N/8`, each
/// segment is detrended by a least-squares line, and the exponent is the slope of `ln F(n)` against
/// `ln n`.
pub fn memory_index(series: &[f64]) -> Result<MemoryIndex> {
    let n = series.len();
    ensure!(n >= MIN_LEN, InvalidParameter, "memory index needs >= {MIN_LEN} samples, got {n}");
    ensure!(series.iter().all(|v| v.is_finite()), InvalidParameter, "non-finite sample");
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut profile = Vec::with_capacity(n);
    let mut acc = 0.0;
    for v in series {
        acc += v - mean;
        profile.push(acc);
    }

    let mut log_n = Vec::new();
    let mut log_f = Vec::new();
    let mut prev = 0;
    for k in 0.. {
        let scale = (MIN_SCALE as f64 * 2f64.powf(k as f64 / 4.0)).round() as usize;
        if scale > n / 8 {
            break;
        }
        if scale == prev {
            continue;
        }
        prev = scale;
        let f = fluctuation(&profile, scale);
        if !(f > 0.0) {
            return Err(Error::Degenerate("zero fluctuation (constant series)".into()));
        }
        log_n.push((scale as f64).ln());
        log_f.push(f.ln());
    }
    let exponent = ols_slope(&log_n, &log_f);
    Ok(MemoryIndex {
        exponent,
        hurst: exponent.clamp(1e-6, 1.0 - 1e-6),
        super_diffusive: exponent >= 1.0,
    })
}

fn fluctuation(profile: &[f64], scale: usize) -> f64 {
    let step = (scale / 2).max(1);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut start = 0;
    while start + scale <= profile.len() {
        total += detrended_variance(&profile[start..start + scale]);
        count += 1;
        start += step;
    }
    (total / count as f64).sqrt()
}

fn detrended_variance(seg: &[f64]) -> f64 {
    let m = seg.len() as f64;
    let x_mean = (m - 1.0) / 2.0;
    let y_mean = seg.iter().sum::<f64>() / m;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in seg.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    seg.iter()
        .enumerate()
        .map(|(i, y)| {
            let r = y - y_mean - slope * (i as f64 - x_mean);
            r * r
        })
        .sum::<f64>()
        / m
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn white_noise_near_half() {
        let mean: f64 = (0..20).map(|s| memory_index(&noise(s, 4096)).unwrap().exponent).sum::<f64>() / 20.0;
        assert!((mean - 0.5).abs() < 0.1, "mean exponent {mean}");
    }

    #[test]
    fn random_walk_flagged() {
        let mut walk = noise(3, 4096);
        for i in 1..walk.len() {
            walk[i] += walk[i - 1];
        }
        let m = memory_index(&walk).unwrap();
        assert!(m.super_diffusive);
        assert!((m.exponent - 1.5).abs() < 0.15, "exponent {}", m.exponent);
        assert!(m.hurst < 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(memory_index(&[1.0; 512]).is_err());
        assert!(memory_index(&[1.0; 100]).is_err());
    }
}

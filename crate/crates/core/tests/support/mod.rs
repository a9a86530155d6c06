//! Shared helpers for integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use neurorisk::manifold::SpdMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `B Bᵀ + 0.1 I` with Gaussian `B`.
pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
    let b = DMatrix::from_fn(n, n, |_, _| gauss(rng));
    SpdMatrix::new(&b * b.transpose() + DMatrix::identity(n, n) * 0.1).unwrap()
}

/// Unit-variance fractional Gaussian noise by circulant embedding
/// (Davies-Harte).
pub fn fgn(n: usize, hurst: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let acov = |k: usize| {
        let k = k as f64;
        let h2 = 2.0 * hurst;
        0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
    };
    let m = 2 * n;
    let mut c: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let k = if j <= n { j } else { m - j };
            Complex::new(acov(k), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut c);
    let lambda: Vec<f64> = c.iter().map(|z| z.re.max(0.0)).collect();

    let mut v = vec![Complex::new(0.0, 0.0); m];
    let mf = m as f64;
    v[0] = Complex::new((lambda[0] / mf).sqrt() * gauss(rng), 0.0);
    v[n] = Complex::new((lambda[n] / mf).sqrt() * gauss(rng), 0.0);
    for k in 1..n {
        let s = (lambda[k] / (2.0 * mf)).sqrt();
        let z = Complex::new(s * gauss(rng), s * gauss(rng));
        v[k] = z;
        v[m - k] = z.conj();
    }
    fft.process(&mut v);
    v[..n].iter().map(|z| z.re).collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

use statrs::function::gamma::gamma;

use super::FractionalOrder;
use crate::error::{ensure, Result};

/// L1-scheme Caputo derivative of samples on a uniform grid with step `h`.
///
/// `D^α f(t_n) ≈ h^{-α}/Γ(2-α) Σ_{k<n} b_k (f_{n-k} - f_{n-k-1})` with
/// `b_k = (k+1)^{1-α} - k^{1-α}`. The value at `t_0` is 0. Exact for
/// piecewise-linear `f`; reduces to backward differences at `α = 1`.
pub fn caputo_derivative_uniform(values: &[f64], h: f64, alpha: FractionalOrder) -> Result<Vec<f64>> {
    ensure!(values.len() >= 3, InvalidParameter, "Caputo derivative needs at least 3 samples");
    ensure!(h > 0.0 && h.is_finite(), InvalidParameter, "step must be positive, got {h}");
    let a = alpha.value();
    let n = values.len();
    let weights: Vec<f64> = (0..n)
        .map(|k| match k {
            // 1^{1-α} - 0^{1-α}, which powf gets wrong at α = 1
            0 => 1.0,
            _ => {
                let k = k as f64;
                (k + 1.0).powf(1.0 - a) - k.powf(1.0 - a)
            }
        })
        .collect();
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = h.powf(-a) / gamma(2.0 - a);

    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate().skip(1) {
        // diffs[i - 1 - k] = f_{i-k} - f_{i-k-1}
        let s: f64 = (0..i).map(|k| weights[k] * diffs[i - 1 - k]).sum();
        *o = scale * s;
    }
    Ok(out)
}

/// Caputo derivative on an explicit time grid, which must be uniform to
/// within `1e-9 * h`.
pub fn caputo_derivative(times: &[f64], values: &[f64], alpha: FractionalOrder) -> Result<Vec<f64>> {
    ensure!(
        times.len() == values.len(),
        Shape,
        "{} times vs {} values",
        times.len(),
        values.len()
    );
    ensure!(times.len() >= 3, InvalidParameter, "Caputo derivative needs at least 3 samples");
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    ensure!(h > 0.0, InvalidParameter, "time grid must be increasing");
    for (i, w) in times.windows(2).enumerate() {
        ensure!(
            ((w[1] - w[0]) - h).abs() <= 1e-9 * h,
            InvalidParameter,
            "non-uniform grid at index {i}: step {} vs {h}",
            w[1] - w[0]
        );
    }
    caputo_derivative_uniform(values, h, alpha)
}

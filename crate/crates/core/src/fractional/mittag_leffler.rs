use statrs::function::gamma::ln_gamma;

use super::FractionalOrder;
use crate::error::{Error, Result};

const MAX_TERMS: usize = 500;
const TOL: f64 = 1e-12;

/// One-parameter Mittag-Leffler function `E_α(z) = Σ_k z^k / Γ(αk + 1)`.
///
/// Plain power series. Fails when the series has not settled below `1e-12`
/// within 500 terms, or when the largest term is so big that cancellation
/// would destroy that accuracy (large negative `z`).
pub fn mittag_leffler(alpha: FractionalOrder, z: f64) -> Result<f64> {
    let a = alpha.value();
    if z == 0.0 {
        return Ok(1.0);
    }
    let ln_abs = z.abs().ln();
    let mut sum = 1.0;
    let mut largest = 1.0f64;
    let mut previous = 1.0f64;
    for k in 1..MAX_TERMS {
        let kf = k as f64;
        let magnitude = (kf * ln_abs - ln_gamma(a * kf + 1.0)).exp();
        sum += if z < 0.0 && k % 2 == 1 { -magnitude } else { magnitude };
        largest = largest.max(magnitude);
        // |z|^k / Γ(αk+1) is unimodal in k: only stop on the decreasing side
        let settled = magnitude < previous && magnitude <= TOL * sum.abs().max(1.0);
        previous = magnitude;
        if settled {
            if largest * f64::EPSILON > TOL * sum.abs().max(1.0) {
                return Err(Error::Degenerate(format!(
                    "Mittag-Leffler series for z={z} loses precision to cancellation"
                )));
            }
            return Ok(sum);
        }
    }
    Err(Error::Degenerate(format!(
        "Mittag-Leffler series for alpha={a}, z={z} did not converge in {MAX_TERMS} terms"
    )))
}

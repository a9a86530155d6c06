//! Multimodal physiological risk modelling: SPD-manifold embeddings,
//! fractional stochastic dynamics, symplectic energy models, cross-modal
//! attention and graph risk diffusion, plus the pipeline that turns
//! multimodal recordings into biomarkers and risk scores.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{a} vs {b} (tolerance {tol})");
    }};
}

pub mod attention;
pub mod error;
pub mod fractional;
pub mod graphdiff;
pub mod hamiltonian;
pub mod manifold;
pub mod model;
pub mod pipeline;
pub mod signals;

pub use error::{Error, ErrorKind, Result};

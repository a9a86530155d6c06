//! Caputo-fractional calculus: derivative evaluation, a predictor–corrector
//! solver for fractional (stochastic) ODEs, the Mittag-Leffler function, and
//! a long-memory index for scalar series.

mod caputo;
mod dfa;
mod fsde;
mod mittag_leffler;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub use caputo::{caputo_derivative, caputo_derivative_uniform};
pub use dfa::{memory_index, MemoryIndex};
pub use fsde::{integrate_fsde, integrate_fsde_projected, Drift, DriftSpec, FnDrift, FracTrajectory, FsdeOptions, LinearDrift};
pub use mittag_leffler::mittag_leffler;

/// Order of a Caputo derivative, `0 < alpha <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FractionalOrder(f64);

impl FractionalOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        ensure!(
            alpha > 0.0 && alpha <= 1.0,
            InvalidParameter,
            "fractional order must satisfy 0 < alpha <= 1, got {alpha}"
        );
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FractionalOrder {
    type Error = crate::error::Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FractionalOrder> for f64 {
    fn from(a: FractionalOrder) -> f64 {
        a.0
    }
}

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure, Result};
use crate::fractional::caputo_derivative_uniform;
use crate::graphdiff::{discrete_gcn_diffusion, Activation, BrainGraph, DiffusionParams, RiskState};

/// Fixed weights of the discrete diffusion surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeSurrogate {
    pub w: DMatrix<f64>,
    pub b: Vec<f64>,
    pub activation: Activation,
    pub steps: usize,
}

impl StrokeSurrogate {
    /// `W = βI`, zero bias, relu; the surrogate then mimics `βAX − γX`.
    pub fn matched(n_regions: usize, p: &DiffusionParams, steps: usize) -> Self {
        Self {
            w: DMatrix::identity(n_regions, n_regions) * p.beta,
            b: vec![0.0; n_regions],
            activation: Activation::Relu,
            steps,
        }
    }
}

/// Rolls the surrogate forward from `x0`, applies the Caputo derivative
/// (unit step) to every region's trajectory and returns the root-mean-square
/// mismatch with `βAX − γX` over regions and steps `1..=steps`.
pub fn stroke_residual(g: &BrainGraph, x0: &[f64], surrogate: &StrokeSurrogate, p: &DiffusionParams) -> Result<f64> {
    ensure!(surrogate.steps >= 2, InvalidParameter, "surrogate needs at least 2 steps");
    let n = g.n_regions();
    let mut states = vec![RiskState::new(x0.to_vec(), 0.0)?];
    for _ in 0..surrogate.steps {
        let last = states.last().expect("nonempty");
        states.push(discrete_gcn_diffusion(last, g, &surrogate.w, &surrogate.b, p.gamma, surrogate.activation)?);
    }
    let mut sq = 0.0;
    for r in 0..n {
        let series: Vec<f64> = states.iter().map(|s| s.x[r]).collect();
        let d = caputo_derivative_uniform(&series, 1.0, p.alpha)?;
        for (t, s) in states.iter().enumerate().skip(1) {
            let x = DVector::from_column_slice(&s.x);
            let rhs = p.beta * (g.adjacency().row(r) * &x)[0] - p.gamma * s.x[r];
            sq += (d[t] - rhs).powi(2);
        }
    }
    Ok((sq / (n * surrogate.steps) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::FractionalOrder;

    #[test]
    fn zero_state_has_zero_residual() {
        let g = BrainGraph::default_graph();
        let p = DiffusionParams::new(FractionalOrder::new(0.7).unwrap(), 0.3, 0.1).unwrap();
        let s = StrokeSurrogate::matched(16, &p, 10);
        assert_eq!(stroke_residual(&g, &[0.0; 16], &s, &p).unwrap(), 0.0);
    }

    #[test]
    fn residual_by_hand_single_region() {
        // one isolated region: A = 0, x_{t+1} = relu(-γ x_t)
        let g = BrainGraph::new(vec!["r".into()], DMatrix::zeros(1, 1)).unwrap();
        let p = DiffusionParams::new(FractionalOrder::new(1.0).unwrap(), 0.0, 0.5).unwrap();
        let s = StrokeSurrogate {
            w: DMatrix::zeros(1, 1),
            b: vec![1.0],
            activation: Activation::Identity,
            steps: 2,
        };
        // x = 2, 1 - 1 = 0, 1 - 0 = 1; backward differences -2, 1
        let r1 = -2.0 - (-0.5 * 0.0);
        let r2 = 1.0 - (-0.5 * 1.0);
        let expect = ((r1 * r1 + r2 * r2) / 2.0f64).sqrt();
        assert!((stroke_residual(&g, &[2.0], &s, &p).unwrap() - expect).abs() < 1e-12);
    }
}

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Activation, BrainGraph};
use crate::error::{ensure, Result};
use crate::fractional::{integrate_fsde_projected, DriftSpec, FractionalOrder, FsdeOptions, LinearDrift};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub alpha: FractionalOrder,
    pub beta: f64,
    pub gamma: f64,
}

impl DiffusionParams {
    pub fn new(alpha: FractionalOrder, beta: f64, gamma: f64) -> Result<Self> {
        ensure!(beta >= 0.0 && beta.is_finite(), InvalidParameter, "beta must be >= 0, got {beta}");
        ensure!(gamma >= 0.0 && gamma.is_finite(), InvalidParameter, "gamma must be >= 0, got {gamma}");
        Ok(Self { alpha, beta, gamma })
    }
}

/// Per-region risk at time `t` (minutes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskState {
    pub x: Vec<f64>,
    pub t: f64,
}

impl RiskState {
    pub fn new(x: Vec<f64>, t: f64) -> Result<Self> {
        ensure!(
            x.iter().all(|v| v.is_finite()) && t.is_finite(),
            InvalidParameter,
            "risk state must be finite"
        );
        Ok(Self { x, t })
    }

    /// Unit risk in one region, zero elsewhere, at `t = 0`.
    pub fn seeded(n_regions: usize, region: usize) -> Result<Self> {
        ensure!(region < n_regions, InvalidParameter, "seed region {region} out of range");
        let mut x = vec![0.0; n_regions];
        x[region] = 1.0;
        Ok(Self { x, t: 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionTrajectory {
    pub labels: Vec<String>,
    pub states: Vec<RiskState>,
}

impl DiffusionTrajectory {
    pub fn region_series(&self, region: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.x[region]).collect()
    }

    /// `t,<label>...` header then every `every`-th state (the last state is
    /// always included).
    pub fn to_csv(&self, every: usize) -> String {
        let every = every.max(1);
        let mut s = String::from("t");
        for l in &self.labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        let last = self.states.len().saturating_sub(1);
        for (i, st) in self.states.iter().enumerate() {
            if i % every != 0 && i != last {
                continue;
            }
            let _ = write!(s, "{}", st.t);
            for v in &st.x {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Integrates `D^α X = βAX − γX` from `x0` with the deterministic fractional
/// solver, clamping risk at zero after every step.
pub fn fractional_diffuse(
    g: &BrainGraph,
    p: &DiffusionParams,
    x0: &RiskState,
    horizon: f64,
    h: f64,
) -> Result<DiffusionTrajectory> {
    let n = g.n_regions();
    ensure!(x0.x.len() == n, Shape, "initial risk has {} entries for {n} regions", x0.x.len());
    ensure!(
        x0.x.iter().all(|&v| v >= 0.0),
        InvalidParameter,
        "initial risk must be nonnegative"
    );
    let m = g.adjacency() * p.beta - DMatrix::identity(n, n) * p.gamma;
    let spec = DriftSpec {
        drift: LinearDrift(m),
        sigma: 0.0,
    };
    let traj = integrate_fsde_projected(&spec, p.alpha, &x0.x, &FsdeOptions::new(horizon, h, 0), |x| {
        for v in x.iter_mut() {
            *v = v.max(0.0);
        }
    })?;
    Ok(DiffusionTrajectory {
        labels: g.labels().to_vec(),
        states: traj
            .times
            .into_iter()
            .zip(traj.states)
            .map(|(t, x)| RiskState { x, t: x0.t + t })
            .collect(),
    })
}

/// One step of the learnable surrogate `X(t+1) = σ(W A X(t) + b − γ X(t))`.
///
/// The output is the formula value as is; use a relu activation to keep risk
/// nonnegative.
pub fn discrete_gcn_diffusion(
    x: &RiskState,
    g: &BrainGraph,
    w: &DMatrix<f64>,
    b: &[f64],
    gamma: f64,
    activation: Activation,
) -> Result<RiskState> {
    let n = g.n_regions();
    ensure!(x.x.len() == n, Shape, "risk has {} entries for {n} regions", x.x.len());
    ensure!(w.shape() == (n, n), Shape, "W is {:?}, expected {n}x{n}", w.shape());
    ensure!(b.len() == n, Shape, "bias has {} entries for {n} regions", b.len());
    let xv = DVector::from_column_slice(&x.x);
    let pre = w * (g.adjacency() * &xv) + DVector::from_column_slice(b) - &xv * gamma;
    RiskState::new(pre.iter().map(|&v| activation.apply(v)).collect(), x.t + 1.0)
}

/// Cumulative walk exposure `Σ_{t=1..T} (βA)^t 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centrality {
    pub values: Vec<f64>,
    /// True when the sum had to be rescaled to stay finite; the true values
    /// are then `values * exp(log_scale)`.
    pub scaled: bool,
    pub log_scale: f64,
}

const RESCALE_ABOVE: f64 = 1e150;

pub fn diffusion_centrality(g: &BrainGraph, beta: f64, horizon: usize) -> Result<Centrality> {
    ensure!(horizon >= 1, InvalidParameter, "walk horizon must be >= 1");
    ensure!(beta >= 0.0 && beta.is_finite(), InvalidParameter, "beta must be >= 0, got {beta}");
    let n = g.n_regions();
    let ba = g.adjacency() * beta;
    let mut walk = DVector::from_element(n, 1.0);
    let mut total = DVector::zeros(n);
    let mut log_scale = 0.0;
    for _ in 0..horizon {
        walk = &ba * walk;
        total += &walk;
        let peak = walk.amax().max(total.amax());
        if peak > RESCALE_ABOVE {
            walk /= peak;
            total /= peak;
            log_scale += peak.ln();
        }
    }
    Ok(Centrality {
        values: total.iter().copied().collect(),
        scaled: log_scale > 0.0,
        log_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdiff::{BRAINSTEM_REGIONS, CORTICAL_REGIONS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i}")).collect()
    }

    fn random_graph(n: usize, seed: u64) -> BrainGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.4) {
                    let w = rng.random_range(0.1..1.0);
                    a[(i, j)] = w;
                    a[(j, i)] = w;
                }
            }
        }
        BrainGraph::new(labels(n), a).unwrap()
    }

    fn params(alpha: f64, beta: f64, gamma: f64) -> DiffusionParams {
        DiffusionParams::new(FractionalOrder::new(alpha).unwrap(), beta, gamma).unwrap()
    }

    /// `exp((βA − γI) t) x0` by symmetric eigendecomposition.
    fn expm_oracle(g: &BrainGraph, beta: f64, gamma: f64, x0: &[f64], t: f64) -> DVector<f64> {
        let n = g.n_regions();
        let m = g.adjacency() * beta - DMatrix::identity(n, n) * gamma;
        let e = m.symmetric_eigen();
        let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| (l * t).exp()));
        &e.eigenvectors * d * e.eigenvectors.transpose() * DVector::from_column_slice(x0)
    }

    fn oracle_error(g: &BrainGraph, beta: f64, gamma: f64, x0: &[f64], horizon: f64, h: f64) -> f64 {
        let traj = fractional_diffuse(g, &params(1.0, beta, gamma), &RiskState::new(x0.to_vec(), 0.0).unwrap(), horizon, h)
            .unwrap();
        traj.states
            .iter()
            .map(|s| {
                let exact = expm_oracle(g, beta, gamma, x0, s.t);
                s.x.iter().zip(exact.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn alpha_one_matches_matrix_exponential() {
        let g = random_graph(10, 5);
        let x0: Vec<f64> = (0..10).map(|i| (i % 3) as f64 * 0.5).collect();
        let err = oracle_error(&g, 0.3, 0.2, &x0, 5.0, 1e-3);
        assert!(err < 1e-4, "max error {err}");
    }

    #[test]
    fn halving_step_reduces_error() {
        let g = random_graph(8, 11);
        let x0 = vec![1.0, 0.0, 0.5, 0.0, 0.0, 2.0, 0.0, 0.1];
        let errs: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&h| oracle_error(&g, 0.4, 0.1, &x0, 2.0, h)).collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    }

    #[test]
    fn no_coupling_is_pure_decay() {
        let g = random_graph(6, 2);
        let x0 = vec![1.0, 2.0, 0.0, 0.5, 3.0, 0.25];
        let traj = fractional_diffuse(&g, &params(1.0, 0.0, 0.7), &RiskState::new(x0.clone(), 0.0).unwrap(), 3.0, 1e-3)
            .unwrap();
        for s in &traj.states {
            for (v, v0) in s.x.iter().zip(&x0) {
                assert!((v - v0 * (-0.7 * s.t).exp()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cycle_stays_uniform() {
        let n = 7;
        let a = DMatrix::from_fn(n, n, |i, j| if (i + 1) % n == j || (j + 1) % n == i { 0.8 } else { 0.0 });
        let g = BrainGraph::new(labels(n), a).unwrap();
        let traj = fractional_diffuse(&g, &params(0.7, 0.5, 0.3), &RiskState::new(vec![0.4; n], 0.0).unwrap(), 4.0, 0.01)
            .unwrap();
        for s in &traj.states {
            assert!(s.x.iter().all(|v| (v - s.x[0]).abs() < 1e-10));
        }
    }

    #[test]
    fn permutation_equivariance() {
        let g = BrainGraph::default_graph();
        let perm: Vec<usize> = vec![3, 15, 0, 7, 12, 1, 9, 4, 14, 2, 11, 6, 13, 5, 10, 8];
        let pg = g.permuted(&perm).unwrap();
        let x0: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let px0: Vec<f64> = perm.iter().map(|&p| x0[p]).collect();
        let p = params(0.8, 0.4, 0.2);
        let a = fractional_diffuse(&g, &p, &RiskState::new(x0, 0.0).unwrap(), 2.0, 0.01).unwrap();
        let b = fractional_diffuse(&pg, &p, &RiskState::new(px0, 0.0).unwrap(), 2.0, 0.01).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            for (i, &pi) in perm.iter().enumerate() {
                assert!((sb.x[i] - sa.x[pi]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn converges_to_perron_direction() {
        let g = BrainGraph::default_graph();
        let traj = fractional_diffuse(&g, &params(1.0, 1.0, 0.0), &RiskState::seeded(16, 12).unwrap(), 30.0, 0.01).unwrap();
        let e = g.adjacency().clone().symmetric_eigen();
        let top = e.eigenvalues.imax();
        let perron = e.eigenvectors.column(top).map(f64::abs);
        let last = DVector::from_column_slice(&traj.states.last().unwrap().x);
        assert!(last.iter().all(|&v| v > 0.0));
        let cos = last.dot(&perron) / (last.norm() * perron.norm());
        assert!(cos > 1.0 - 1e-6, "cosine {cos}");
    }

    #[test]
    fn brainstem_seed_reaches_cortex_later() {
        let g = BrainGraph::default_graph();
        let seed = g.region_index("LC").unwrap();
        let traj = fractional_diffuse(&g, &params(0.8, 0.5, 0.2), &RiskState::seeded(16, seed).unwrap(), 30.0, 0.02).unwrap();
        let mean = |x: &[f64], r: std::ops::Range<usize>| {
            let k = r.len() as f64;
            x[r].iter().sum::<f64>() / k
        };
        let brainstem = 16 - BRAINSTEM_REGIONS..16;
        let ratio = |s: &RiskState| mean(&s.x, 0..CORTICAL_REGIONS) / mean(&s.x, brainstem.clone());
        let early = &traj.states[50];
        let late = traj.states.last().unwrap();
        assert!(ratio(early) < 0.5, "early ratio {}", ratio(early));
        assert!(ratio(late) > 2.0 * ratio(early), "late ratio {}", ratio(late));
    }

    #[test]
    fn clamps_and_validates() {
        let g = random_graph(4, 1);
        assert!(fractional_diffuse(&g, &params(1.0, 0.1, 0.1), &RiskState::new(vec![-1.0, 0.0, 0.0, 0.0], 0.0).unwrap(), 1.0, 0.1).is_err());
        assert!(fractional_diffuse(&g, &params(1.0, 0.1, 0.1), &RiskState::new(vec![1.0; 3], 0.0).unwrap(), 1.0, 0.1).is_err());
        assert!(fractional_diffuse(&g, &params(1.0, 0.1, 0.1), &RiskState::new(vec![1.0; 4], 0.0).unwrap(), 0.0, 0.1).is_err());
        assert!(DiffusionParams::new(FractionalOrder::new(0.5).unwrap(), -1.0, 0.0).is_err());
        let traj = fractional_diffuse(&g, &params(0.5, 0.2, 2.0), &RiskState::new(vec![1.0, 0.0, 3.0, 0.2], 0.0).unwrap(), 5.0, 0.05).unwrap();
        assert!(traj.states.iter().all(|s| s.x.iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn trajectory_csv() {
        let g = random_graph(3, 9);
        let traj = fractional_diffuse(&g, &params(1.0, 0.1, 0.1), &RiskState::new(vec![1.0; 3], 0.0).unwrap(), 1.0, 0.25).unwrap();
        let csv = traj.to_csv(2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,r0,r1,r2");
        assert_eq!(lines.len(), 1 + 3);
        assert!(lines[3].starts_with("1,"));
    }

    #[test]
    fn discrete_step_cases() {
        let g = random_graph(3, 4);
        let x = RiskState::new(vec![0.5, 1.0, 2.0], 0.0).unwrap();
        let zero = discrete_gcn_diffusion(&x, &g, &DMatrix::zeros(3, 3), &[0.0; 3], 0.0, Activation::Identity).unwrap();
        assert_eq!(zero.x, vec![0.0; 3]);
        assert_eq!(zero.t, 1.0);

        let empty = BrainGraph::new(labels(3), DMatrix::zeros(3, 3)).unwrap();
        let w = DMatrix::identity(3, 3) * 2.5;
        let c = discrete_gcn_diffusion(&x, &empty, &w, &[0.0; 3], 0.3, Activation::Identity).unwrap();
        for (v, x0) in c.x.iter().zip(&x.x) {
            assert!((v + 0.3 * x0).abs() < 1e-15);
        }
        assert!(discrete_gcn_diffusion(&x, &g, &DMatrix::zeros(2, 2), &[0.0; 3], 0.0, Activation::Identity).is_err());
        assert!(discrete_gcn_diffusion(&x, &g, &DMatrix::zeros(3, 3), &[0.0; 2], 0.0, Activation::Identity).is_err());
    }

    #[test]
    fn discrete_three_nodes_by_hand() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.5, 1.0, 0.0, 0.0, 0.5, 0.0, 0.0]);
        let g = BrainGraph::new(labels(3), a).unwrap();
        let w = DMatrix::from_row_slice(3, 3, &[0.2, 0.0, 0.1, 0.0, 0.3, 0.0, -0.4, 0.0, 0.5]);
        let x = [1.0, 2.0, 4.0];
        let b = [0.1, -0.2, 0.05];
        let gamma = 0.25;
        let ax = [2.0 + 2.0, 1.0, 0.5];
        let wax = [0.2 * ax[0] + 0.1 * ax[2], 0.3 * ax[1], -0.4 * ax[0] + 0.5 * ax[2]];
        let out = discrete_gcn_diffusion(&RiskState::new(x.to_vec(), 3.0).unwrap(), &g, &w, &b, gamma, Activation::Tanh).unwrap();
        for i in 0..3 {
            assert!((out.x[i] - (wax[i] + b[i] - gamma * x[i]).tanh()).abs() < 1e-12);
        }
        assert_eq!(out.t, 4.0);
    }

    #[test]
    fn centrality_cases() {
        let g = random_graph(6, 3);
        let c = diffusion_centrality(&g, 0.0, 4).unwrap();
        assert_eq!(c.values, vec![0.0; 6]);
        assert!(!c.scaled);

        let star = DMatrix::from_fn(5, 5, |i, j| if (i == 0) != (j == 0) { 1.0 } else { 0.0 });
        let star = BrainGraph::new(labels(5), star).unwrap();
        let c = diffusion_centrality(&star, 0.1, 3).unwrap();
        // brute force: Σ (βA)^t 1
        let ba = star.adjacency() * 0.1;
        let mut p = DMatrix::identity(5, 5);
        let mut sum = DVector::zeros(5);
        for _ in 0..3 {
            p = &p * &ba;
            sum += &p * DVector::from_element(5, 1.0);
        }
        for i in 0..5 {
            assert!((c.values[i] - sum[i]).abs() < 1e-14);
        }
        assert!(c.values[1..].iter().all(|&leaf| c.values[0] > leaf));

        let complete = DMatrix::from_fn(6, 6, |i, j| if i != j { 0.7 } else { 0.0 });
        let c = diffusion_centrality(&BrainGraph::new(labels(6), complete).unwrap(), 0.3, 10).unwrap();
        assert!(c.values.iter().all(|v| (v - c.values[0]).abs() < 1e-12 * c.values[0]));

        assert!(diffusion_centrality(&g, 0.1, 0).is_err());
    }

    #[test]
    fn centrality_overflow_is_scaled() {
        let complete = DMatrix::from_fn(6, 6, |i, j| if i != j { 1.0 } else { 0.0 });
        let g = BrainGraph::new(labels(6), complete).unwrap();
        let c = diffusion_centrality(&g, 10.0, 400).unwrap();
        assert!(c.scaled);
        assert!(c.values.iter().all(|v| v.is_finite() && (v - c.values[0]).abs() < 1e-9 * c.values[0]));
        // Σ_{t=1..400} 50^t = 50^400 · 50/49 up to a negligible tail
        let log_true = c.values[0].ln() + c.log_scale;
        assert!((log_true - 400.0 * 50f64.ln() - (50.0f64 / 49.0).ln()).abs() < 1e-9);
    }
}

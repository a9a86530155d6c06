//! Quadratic Hamiltonian over labelled cortical / brainstem / cardiac nodes
//! and its Störmer–Verlet integrator.
//!
//! `H(q, p) = ½ pᵀ M⁻¹ p + ½ qᵀ (K + C) q` with diagonal mass `M`, PSD
//! stiffness `K` and a symmetric cross-subsystem coupling `C`. The flow is
//! `ẋ = J ∇H` with the canonical `J = [[0, I], [-I, 0]]`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BrainstemNucleus {
    #[serde(rename = "RTN")]
    Rtn,
    LocusCoeruleus,
    Raphe,
    #[serde(rename = "NTS")]
    Nts,
    Hypothalamus,
}

impl BrainstemNucleus {
    pub const ALL: [BrainstemNucleus; 5] = [
        BrainstemNucleus::Rtn,
        BrainstemNucleus::LocusCoeruleus,
        BrainstemNucleus::Raphe,
        BrainstemNucleus::Nts,
        BrainstemNucleus::Hypothalamus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BrainstemNucleus::Rtn => "retrotrapezoid nucleus",
            BrainstemNucleus::LocusCoeruleus => "locus coeruleus",
            BrainstemNucleus::Raphe => "raphe nuclei",
            BrainstemNucleus::Nts => "nucleus tractus solitarius",
            BrainstemNucleus::Hypothalamus => "hypothalamus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubsystemLabel {
    Cortical,
    Brainstem(BrainstemNucleus),
    Cardiac,
}

/// The three energy compartments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subsystem {
    Cortical,
    Brainstem,
    Cardiac,
}

impl SubsystemLabel {
    pub fn subsystem(self) -> Subsystem {
        match self {
            SubsystemLabel::Cortical => Subsystem::Cortical,
            SubsystemLabel::Brainstem(_) => Subsystem::Brainstem,
            SubsystemLabel::Cardiac => Subsystem::Cardiac,
        }
    }
}

impl fmt::Display for SubsystemLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsystemLabel::Cortical => f.write_str("cortical"),
            SubsystemLabel::Brainstem(n) => write!(f, "brainstem/{}", n.name()),
            SubsystemLabel::Cardiac => f.write_str("cardiac"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl HamiltonianState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        ensure!(q.len() == p.len(), Shape, "q has {} entries, p has {}", q.len(), p.len());
        ensure!(
            q.iter().chain(&p).all(|v| v.is_finite()),
            InvalidParameter,
            "non-finite state"
        );
        Ok(Self { q, p })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Anything that supplies a potential energy and its gradient. The quadratic
/// [`EnergyModel`] is the built-in instance.
pub trait Potential {
    fn dim(&self) -> usize;
    fn inverse_mass(&self) -> &[f64];
    fn gradient(&self, q: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    mass: Vec<f64>,
    inv_mass: Vec<f64>,
    stiffness: DMatrix<f64>,
    coupling: DMatrix<f64>,
    potential: DMatrix<f64>,
    labels: Vec<SubsystemLabel>,
}

impl EnergyModel {
    pub fn new(
        mass: Vec<f64>,
        stiffness: DMatrix<f64>,
        coupling: DMatrix<f64>,
        labels: Vec<SubsystemLabel>,
    ) -> Result<Self> {
        let n = mass.len();
        ensure!(n > 0, Shape, "energy model needs at least one node");
        ensure!(labels.len() == n, Shape, "{} labels for {n} nodes", labels.len());
        ensure!(
            stiffness.shape() == (n, n) && coupling.shape() == (n, n),
            Shape,
            "stiffness and coupling must be {n}x{n}"
        );
        ensure!(
            mass.iter().all(|m| *m > 0.0 && m.is_finite()),
            InvalidParameter,
            "masses must be positive"
        );
        let potential = &stiffness + &coupling;
        let scale = potential.amax().max(1.0);
        for i in 0..n {
            for j in 0..n {
                ensure!(
                    (potential[(i, j)] - potential[(j, i)]).abs() <= 1e-12 * scale,
                    InvalidParameter,
                    "K + C is not symmetric at ({i},{j})"
                );
                if labels[i].subsystem() == labels[j].subsystem() {
                    ensure!(
                        coupling[(i, j)] == 0.0,
                        InvalidParameter,
                        "coupling ({i},{j}) lies inside the {:?} block",
                        labels[i].subsystem()
                    );
                }
            }
        }
        let min_k = ((&stiffness + stiffness.transpose()) * 0.5).symmetric_eigenvalues().min();
        ensure!(
            min_k >= -1e-12 * scale,
            InvalidParameter,
            "stiffness is not positive semidefinite (eigenvalue {min_k:e})"
        );
        Ok(Self {
            inv_mass: mass.iter().map(|m| 1.0 / m).collect(),
            mass,
            stiffness,
            coupling,
            potential,
            labels,
        })
    }

    /// Desk-scale autonomic network: `n_cortical` cortical oscillators, the
    /// five brainstem nuclei and one cardiac node, unit masses, with weak
    /// cortical–brainstem and brainstem–cardiac coupling.
    pub fn autonomic(n_cortical: usize) -> Result<Self> {
        let mut labels = vec![SubsystemLabel::Cortical; n_cortical];
        labels.extend(BrainstemNucleus::ALL.iter().map(|&n| SubsystemLabel::Brainstem(n)));
        labels.push(SubsystemLabel::Cardiac);
        let n = labels.len();
        let mut k = DMatrix::zeros(n, n);
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = match labels[i].subsystem() {
                Subsystem::Cortical => 1.0,
                Subsystem::Brainstem => 0.5,
                Subsystem::Cardiac => 1.5,
            };
        }
        for i in 0..n {
            for j in 0..n {
                let w = match (labels[i].subsystem(), labels[j].subsystem()) {
                    (Subsystem::Cortical, Subsystem::Brainstem) | (Subsystem::Brainstem, Subsystem::Cortical) => {
                        0.05
                    }
                    (Subsystem::Brainstem, Subsystem::Cardiac) | (Subsystem::Cardiac, Subsystem::Brainstem) => {
                        0.08
                    }
                    _ => 0.0,
                };
                c[(i, j)] = w;
            }
        }
        Self::new(vec![1.0; n], k, c, labels)
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn labels(&self) -> &[SubsystemLabel] {
        &self.labels
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }
}

impl Potential for EnergyModel {
    fn dim(&self) -> usize {
        self.mass.len()
    }

    fn inverse_mass(&self) -> &[f64] {
        &self.inv_mass
    }

    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        let p = &self.potential;
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..q.len()).map(|j| p[(i, j)] * q[j]).sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyDecomposition {
    pub total: f64,
    pub cortical: f64,
    pub brainstem: f64,
    pub cardiac: f64,
}

impl EnergyDecomposition {
    pub fn parts(&self) -> [f64; 3] {
        [self.cortical, self.brainstem, self.cardiac]
    }

    fn part_mut(&mut self, s: Subsystem) -> &mut f64 {
        match s {
            Subsystem::Cortical => &mut self.cortical,
            Subsystem::Brainstem => &mut self.brainstem,
            Subsystem::Cardiac => &mut self.cardiac,
        }
    }
}

/// Total energy and its split over the three subsystems.
///
/// Kinetic energy and every potential term `½ q_i P_ij q_j` inside one
/// subsystem go to that subsystem; a cross term is shared half and half
/// between the two subsystems it joins.
pub fn total_energy(s: &HamiltonianState, m: &EnergyModel) -> Result<EnergyDecomposition> {
    let n = m.dim();
    ensure!(s.dim() == n, Shape, "state has {} nodes, model has {n}", s.dim());
    let mut parts = EnergyDecomposition {
        total: 0.0,
        cortical: 0.0,
        brainstem: 0.0,
        cardiac: 0.0,
    };
    for i in 0..n {
        let si = m.labels[i].subsystem();
        *parts.part_mut(si) += 0.5 * s.p[i] * s.p[i] * m.inv_mass[i];
        for j in 0..n {
            let term = 0.5 * s.q[i] * m.potential[(i, j)] * s.q[j];
            if term == 0.0 {
                continue;
            }
            let sj = m.labels[j].subsystem();
            if si == sj {
                *parts.part_mut(si) += term;
            } else {
                *parts.part_mut(si) += 0.5 * term;
                *parts.part_mut(sj) += 0.5 * term;
            }
        }
    }
    parts.total = parts.cortical + parts.brainstem + parts.cardiac;
    Ok(parts)
}

/// Hamiltonian evaluated directly as the two quadratic forms.
pub fn hamiltonian(s: &HamiltonianState, m: &EnergyModel) -> Result<f64> {
    let n = m.dim();
    ensure!(s.dim() == n, Shape, "state has {} nodes, model has {n}", s.dim());
    let kinetic: f64 = (0..n).map(|i| 0.5 * s.p[i] * s.p[i] * m.inv_mass[i]).sum();
    let mut potential = 0.0;
    for i in 0..n {
        for j in 0..n {
            potential += 0.5 * s.q[i] * m.potential[(i, j)] * s.q[j];
        }
    }
    Ok(kinetic + potential)
}

/// One Störmer–Verlet (kick–drift–kick) step in place.
pub fn leapfrog_step<P: Potential>(q: &mut [f64], p: &mut [f64], pot: &P, h: f64, grad: &mut [f64]) {
    pot.gradient(q, grad);
    for i in 0..p.len() {
        p[i] -= 0.5 * h * grad[i];
    }
    let inv_m = pot.inverse_mass();
    for i in 0..q.len() {
        q[i] += h * inv_m[i] * p[i];
    }
    pot.gradient(q, grad);
    for i in 0..p.len() {
        p[i] -= 0.5 * h * grad[i];
    }
}

/// `steps` leapfrog steps; the returned path starts with `s0`.
pub fn symplectic_integrate<P: Potential>(
    s0: &HamiltonianState,
    pot: &P,
    h: f64,
    steps: usize,
) -> Result<Vec<HamiltonianState>> {
    ensure!(h > 0.0 && h.is_finite(), InvalidParameter, "step must be positive, got {h}");
    ensure!(
        s0.dim() == pot.dim(),
        Shape,
        "state has {} nodes, model has {}",
        s0.dim(),
        pot.dim()
    );
    let mut q = s0.q.clone();
    let mut p = s0.p.clone();
    let mut grad = vec![0.0; q.len()];
    let mut path = Vec::with_capacity(steps + 1);
    path.push(s0.clone());
    for step in 1..=steps {
        leapfrog_step(&mut q, &mut p, pot, h, &mut grad);
        if q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        path.push(HamiltonianState {
            q: q.clone(),
            p: p.clone(),
        });
    }
    Ok(path)
}

/// Shannon entropy of the subsystem energy shares (negatives clamped to 0).
pub fn latent_energy_entropy(parts: &[f64]) -> Result<f64> {
    let clamped: Vec<f64> = parts.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    ensure!(
        total > 0.0 && total.is_finite(),
        Degenerate,
        "energy entropy needs a strictly positive part"
    );
    Ok(-clamped
        .iter()
        .filter(|&&e| e > 0.0)
        .map(|e| {
            let w = e / total;
            w * w.ln()
        })
        .sum::<f64>())
}

//! Structural brain graphs, graph-convolution propagation and risk diffusion.

mod diffusion;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub use diffusion::{
    diffusion_centrality, discrete_gcn_diffusion, fractional_diffuse, Centrality, DiffusionParams,
    DiffusionTrajectory, RiskState,
};

/// Regions in the bundled graph, in label order: cortical, subcortical, then
/// the brainstem nuclei.
pub const CORTICAL_REGIONS: usize = 8;
pub const SUBCORTICAL_REGIONS: usize = 3;
pub const BRAINSTEM_REGIONS: usize = 5;

const DEFAULT_GRAPH: &str = include_str!("../../data/default_graph.json");

/// Undirected weighted region graph with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BrainGraph {
    labels: Vec<String>,
    adjacency: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    labels: Vec<String>,
    adjacency: Vec<Vec<f64>>,
}

impl BrainGraph {
    pub fn new(labels: Vec<String>, adjacency: DMatrix<f64>) -> Result<Self> {
        let n = labels.len();
        ensure!(n > 0, InvalidParameter, "graph needs at least one region");
        ensure!(
            adjacency.shape() == (n, n),
            Shape,
            "adjacency is {:?} for {n} labels",
            adjacency.shape()
        );
        for i in 0..n {
            ensure!(adjacency[(i, i)] == 0.0, InvalidParameter, "nonzero diagonal at region {i}");
            for j in 0..n {
                let a = adjacency[(i, j)];
                ensure!(a.is_finite() && a >= 0.0, InvalidParameter, "adjacency[{i}][{j}] = {a} is not a nonnegative number");
                ensure!(
                    (a - adjacency[(j, i)]).abs() <= 1e-12,
                    InvalidParameter,
                    "adjacency is not symmetric at ({i}, {j})"
                );
            }
        }
        Ok(Self { labels, adjacency })
    }

    /// The bundled 16-region connectome.
    pub fn default_graph() -> Self {
        Self::from_json(DEFAULT_GRAPH, "<bundled graph>").expect("bundled graph is valid")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let n = file.labels.len();
        ensure!(
            file.adjacency.len() == n && file.adjacency.iter().all(|r| r.len() == n),
            Shape,
            "{origin}: adjacency must be {n}x{n}"
        );
        let adjacency = DMatrix::from_fn(n, n, |i, j| file.adjacency[i][j]);
        Self::new(file.labels, adjacency)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        let n = self.n_regions();
        let file = GraphFile {
            labels: self.labels.clone(),
            adjacency: (0..n).map(|i| self.adjacency.row(i).iter().copied().collect()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("graph serializes")
    }

    pub fn n_regions(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn region_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Relabels regions so that new region `i` is old region `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_regions();
        let mut seen = vec![false; n];
        ensure!(perm.len() == n, Shape, "permutation has {} entries for {n} regions", perm.len());
        for &p in perm {
            ensure!(p < n && !seen[p], InvalidParameter, "not a permutation");
            seen[p] = true;
        }
        Self::new(
            perm.iter().map(|&p| self.labels[p].clone()).collect(),
            DMatrix::from_fn(n, n, |i, j| self.adjacency[(perm[i], perm[j])]),
        )
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degrees of `A + I`.
pub fn normalized_adjacency(g: &BrainGraph) -> DMatrix<f64> {
    let n = g.n_regions();
    let a = g.adjacency() + DMatrix::identity(n, n);
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a.row(i).sum().sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * a[(i, j)] * inv_sqrt[j])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    #[default]
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

/// One graph-convolution layer `σ(Â H W)` with `H` of shape `regions x features`.
pub fn gcn_layer(h: &DMatrix<f64>, g: &BrainGraph, w: &DMatrix<f64>, activation: Activation) -> Result<DMatrix<f64>> {
    ensure!(
        h.nrows() == g.n_regions(),
        Shape,
        "H has {} rows for {} regions",
        h.nrows(),
        g.n_regions()
    );
    ensure!(h.ncols() == w.nrows(), Shape, "H has {} columns, W has {} rows", h.ncols(), w.nrows());
    Ok((normalized_adjacency(g) * h * w).map(|x| activation.apply(x)))
}

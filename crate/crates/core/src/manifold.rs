//! Riemannian geometry on the cone of symmetric positive-definite matrices.
//!
//! The default metric is affine-invariant: `d(A, B) = ||log(A^{-1/2} B A^{-1/2})||_F`,
//! which is unchanged by every congruence `X -> G X G^T`. Tangent vectors at a
//! base point `A` are handled in whitened form `A^{-1/2} U A^{-1/2}` wherever
//! that avoids a round trip.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{ensure, Error, Result};
use crate::signals::Modality;

const EIGEN_FLOOR: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    ensure!(m.is_square(), Shape, "matrix is {}x{}, not square", m.nrows(), m.ncols());
    ensure!(m.nrows() > 0, Shape, "empty matrix");
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            let gap = (m[(i, j)] - m[(j, i)]).abs();
            if !(gap <= SYMMETRY_TOL * scale) {
                return Err(Error::NotSpd(format!(
                    "asymmetric at ({i},{j}): |{} - {}| = {gap:e}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl SpdMatrix {
    /// Validates symmetry (1e-10, relative to the largest entry) and a
    /// strictly positive spectrum, then stores the exactly symmetrized matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        ensure!(m.iter().all(|v| v.is_finite()), NotSpd, "non-finite entry");
        let m = symmetrize(&m);
        let min = m.clone().symmetric_eigenvalues().min();
        ensure!(min > 0.0, NotSpd, "smallest eigenvalue {min:e} is not positive");
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }

    /// `f` applied to the spectrum: `V diag(f(λ)) V^T`.
    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        spectral_map(&self.0, f)
    }

    pub fn sqrt(&self) -> SpdMatrix {
        SpdMatrix(self.spectral_map(|l| l.max(EIGEN_FLOOR).sqrt()))
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        SpdMatrix(self.spectral_map(|l| 1.0 / l.max(EIGEN_FLOOR).sqrt()))
    }

    pub fn powf(&self, p: f64) -> SpdMatrix {
        SpdMatrix(self.spectral_map(|l| l.max(EIGEN_FLOOR).powf(p)))
    }
}

/// `W X W` for a whitening factor `W = S^{-1/2}`.
fn whiten(inv_sqrt: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(inv_sqrt * x * inv_sqrt))
}

fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mapped = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&mapped) * v.transpose()))
}

/// Matrix logarithm of an SPD matrix (eigenvalues floored at 1e-12).
pub fn spd_log(a: &SpdMatrix) -> DMatrix<f64> {
    a.spectral_map(|l| l.max(EIGEN_FLOOR).ln())
}

/// Matrix exponential of a symmetric matrix.
pub fn spd_exp(s: &DMatrix<f64>) -> Result<SpdMatrix> {
    check_symmetric(s)?;
    ensure!(s.iter().all(|v| v.is_finite()), NotSpd, "non-finite entry");
    SpdMatrix::new(spectral_map(&symmetrize(s), f64::exp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    AffineInvariant,
    /// `||log A - log B||_F`; cheaper, but only invariant under orthogonal congruence.
    LogEuclidean,
}

fn same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    ensure!(
        a.dim() == b.dim(),
        Shape,
        "dimension mismatch: {} vs {}",
        a.dim(),
        b.dim()
    );
    Ok(())
}

/// Affine-invariant geodesic distance.
///
/// Computed from the generalized eigenvalues of `(B, A)` via the Cholesky
/// factor `A = L L^T`: the spectrum of `L^{-1} B L^{-T}` equals that of
/// `A^{-1/2} B A^{-1/2}`.
pub fn geodesic_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    same_dim(a, b)?;
    let l = a
        .0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?
        .l();
    let l_inv_b = l
        .solve_lower_triangular(&b.0)
        .ok_or_else(|| Error::NotSpd("singular Cholesky factor".into()))?;
    let m = l
        .solve_lower_triangular(&l_inv_b.transpose())
        .ok_or_else(|| Error::NotSpd("singular Cholesky factor".into()))?;
    let eig = symmetrize(&m).symmetric_eigenvalues();
    Ok(eig
        .iter()
        .map(|&l| l.max(EIGEN_FLOOR).ln().powi(2))
        .sum::<f64>()
        .sqrt())
}

pub fn distance(a: &SpdMatrix, b: &SpdMatrix, metric: Metric) -> Result<f64> {
    match metric {
        Metric::AffineInvariant => geodesic_distance(a, b),
        Metric::LogEuclidean => {
            same_dim(a, b)?;
            Ok((spd_log(a) - spd_log(b)).norm())
        }
    }
}

/// Riemannian logarithm `Log_A(B) = A^{1/2} log(A^{-1/2} B A^{-1/2}) A^{1/2}`.
pub fn log_map(base: &SpdMatrix, p: &SpdMatrix) -> Result<DMatrix<f64>> {
    same_dim(base, p)?;
    let s = base.sqrt().0;
    let is = base.inv_sqrt().0;
    let w = spectral_map(&whiten(&is, &p.0), |l| l.max(EIGEN_FLOOR).ln());
    Ok(symmetrize(&(&s * w * &s)))
}

/// Riemannian exponential `Exp_A(U) = A^{1/2} exp(A^{-1/2} U A^{-1/2}) A^{1/2}`.
pub fn exp_map(base: &SpdMatrix, u: &DMatrix<f64>) -> Result<SpdMatrix> {
    check_symmetric(u)?;
    ensure!(
        u.nrows() == base.dim(),
        Shape,
        "tangent dimension {} vs base {}",
        u.nrows(),
        base.dim()
    );
    let s = base.sqrt().0;
    let is = base.inv_sqrt().0;
    let e = spectral_map(&whiten(&is, u), f64::exp);
    SpdMatrix::new(symmetrize(&(&s * e * &s)))
}

/// Point at parameter `t` on the geodesic from `a` (t = 0) to `b` (t = 1):
/// `A^{1/2} (A^{-1/2} B A^{-1/2})^t A^{1/2}`.
pub fn geodesic_point(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    same_dim(a, b)?;
    let s = a.sqrt().0;
    let is = a.inv_sqrt().0;
    let inner = spectral_map(&whiten(&is, &b.0), |l| l.max(EIGEN_FLOOR).powf(t));
    SpdMatrix::new(symmetrize(&(&s * inner * &s)))
}

fn sum_sq_distances(m: &SpdMatrix, points: &[SpdMatrix]) -> Result<f64> {
    points
        .iter()
        .map(|p| geodesic_distance(m, p).map(|d| d * d))
        .sum()
}

/// Karcher mean by Riemannian gradient descent.
///
/// Starts from the arithmetic mean. Each step moves along
/// `Exp_M(step * mean_i Log_M(P_i))`; the step starts at 1, is halved
/// whenever neither the sum of squared distances nor the gradient norm
/// decreases, and doubles back (up to 1) after each accepted move. Converged
/// when the whitened tangent sum `||Σ log(M^{-1/2} P_i M^{-1/2})||_F < tol`.
pub fn frechet_mean(points: &[SpdMatrix], tol: f64, max_iter: usize) -> Result<SpdMatrix> {
    ensure!(!points.is_empty(), InvalidParameter, "Fréchet mean of an empty set");
    ensure!(tol > 0.0, InvalidParameter, "tolerance must be positive");
    let n = points[0].dim();
    for p in points {
        ensure!(p.dim() == n, Shape, "mixed dimensions {} and {}", n, p.dim());
    }
    if points.len() == 1 {
        return Ok(points[0].clone());
    }

    let mut sum = DMatrix::zeros(n, n);
    for p in points {
        sum += &p.0;
    }
    let mut mean = SpdMatrix::new(sum / points.len() as f64)?;
    let mut cost = sum_sq_distances(&mean, points)?;
    let mut grad = karcher_gradient(&mean, points);
    let mut step = 1.0;

    for _ in 0..max_iter {
        let residual = grad.norm();
        if residual < tol {
            return Ok(mean);
        }
        let s = mean.sqrt().0;
        let direction = &grad / points.len() as f64;
        loop {
            let moved = spectral_map(&(&direction * step), f64::exp);
            let candidate = SpdMatrix::new(symmetrize(&(&s * moved * &s)))?;
            let c = sum_sq_distances(&candidate, points)?;
            let g = karcher_gradient(&candidate, points);
            // near the optimum, or on ill-conditioned sets, the cost is flat
            // to rounding; the whitened gradient norm still ranks iterates
            if c < cost || g.norm() < residual {
                mean = candidate;
                cost = c;
                grad = g;
                step = (step * 2.0).min(1.0);
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                // no descent possible at working precision
                return Err(Error::NoConvergence {
                    iterations: max_iter,
                    residual,
                    last: Some(Box::new(mean)),
                });
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: grad.norm(),
        last: Some(Box::new(mean)),
    })
}

/// `Σ log(M^{-1/2} P_i M^{-1/2})`, the whitened Riemannian gradient direction.
fn karcher_gradient(mean: &SpdMatrix, points: &[SpdMatrix]) -> DMatrix<f64> {
    let is = mean.inv_sqrt().0;
    let n = mean.dim();
    let mut grad = DMatrix::zeros(n, n);
    for p in points {
        grad += spectral_map(&whiten(&is, &p.0), |l| l.max(EIGEN_FLOOR).ln());
    }
    grad
}

/// Tangent-comparison defect of a triangle, normalized by `d(B, C)`:
///
/// `δ = (d(B, C) - ||Log_A(B) - Log_A(C)||_A) / d(B, C)`.
///
/// Non-negative on this non-positively curved space, zero on commuting
/// (flat) triples.
pub fn curvature_proxy(a: &SpdMatrix, b: &SpdMatrix, c: &SpdMatrix) -> Result<f64> {
    same_dim(a, b)?;
    same_dim(a, c)?;
    let d_bc = geodesic_distance(b, c)?;
    let d_ab = geodesic_distance(a, b)?;
    let d_ac = geodesic_distance(a, c)?;
    ensure!(
        d_bc > 1e-9 && d_ab > 1e-9 && d_ac > 1e-9,
        Degenerate,
        "curvature proxy needs pairwise distinct points (distances {d_ab:e}, {d_ac:e}, {d_bc:e})"
    );
    let is = a.inv_sqrt().0;
    let lb = spectral_map(&whiten(&is, &b.0), |l| l.max(EIGEN_FLOOR).ln());
    let lc = spectral_map(&whiten(&is, &c.0), |l| l.max(EIGEN_FLOOR).ln());
    let tangent = (lb - lc).norm();
    Ok((d_bc - tangent) / d_bc)
}

/// Invertible matrix acting on SPD matrices by congruence `X -> G X G^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement(DMatrix<f64>);

impl GroupElement {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        ensure!(g.is_square(), Shape, "group element must be square");
        let det = g.determinant();
        ensure!(
            det.abs() > 1e-12,
            InvalidParameter,
            "group element is singular (|det| = {:e})",
            det.abs()
        );
        Ok(Self(g))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn act(&self, x: &SpdMatrix) -> Result<SpdMatrix> {
        ensure!(
            self.0.nrows() == x.dim(),
            Shape,
            "group element {} vs point {}",
            self.0.nrows(),
            x.dim()
        );
        SpdMatrix::new(symmetrize(&(&self.0 * &x.0 * self.0.transpose())))
    }
}

/// Sequence of same-dimension SPD points from one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldEmbedding {
    pub modality: Modality,
    points: Vec<SpdMatrix>,
}

impl ManifoldEmbedding {
    pub fn points(&self) -> &[SpdMatrix] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn pairwise_distances(&self) -> Result<DMatrix<f64>> {
        let n = self.points.len();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = geodesic_distance(&self.points[i], &self.points[j])?;
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        Ok(d)
    }
}

pub fn embed_modality(covs: Vec<SpdMatrix>, modality: Modality) -> Result<ManifoldEmbedding> {
    ensure!(!covs.is_empty(), InvalidParameter, "{modality}: no covariance points to embed");
    let n = covs[0].dim();
    ensure!(
        covs.iter().all(|c| c.dim() == n),
        Shape,
        "{modality}: mixed point dimensions"
    );
    Ok(ManifoldEmbedding {
        modality,
        points: covs,
    })
}

pub fn spd_to_csv(a: &SpdMatrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# dim,{}", a.dim());
    for i in 0..a.dim() {
        let row: Vec<String> = a.0.row(i).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn spd_from_csv(text: &str) -> Result<SpdMatrix> {
    let bad = |m: String| Error::Parse {
        path: "<spd>".into(),
        message: m,
    };
    let mut dim = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(h) = line.strip_prefix('#') {
            if let Some(("dim", v)) = h.split_once(',').map(|(k, v)| (k.trim(), v.trim())) {
                dim = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?);
            }
            continue;
        }
        rows.push(
            line.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?,
        );
    }
    let n = dim.ok_or_else(|| bad("missing '# dim' header".into()))?;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(bad(format!("expected {n}x{n} entries")));
    }
    SpdMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::E;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SpdMatrix {
        let x = DMatrix::from_fn(n, n + 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        SpdMatrix::new(&x * x.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1).unwrap()
    }

    /// Independent eigendecomposition oracle: log and exp built directly from
    /// nalgebra's eigenpairs, not through the module's spectral helper.
    fn oracle_round_trip(a: &DMatrix<f64>) -> DMatrix<f64> {
        let e = a.clone().symmetric_eigen();
        let mut acc = DMatrix::zeros(a.nrows(), a.ncols());
        for k in 0..a.nrows() {
            let v = e.eigenvectors.column(k);
            acc += v * v.transpose() * e.eigenvalues[k].ln().exp();
        }
        acc
    }

    #[test]
    fn log_identity_and_diagonal() {
        assert!(spd_log(&SpdMatrix::identity(3)).norm() < 1e-15);
        let l = spd_log(&SpdMatrix::from_diagonal(&[E, E * E]).unwrap());
        assert!((l[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((l[(1, 1)] - 2.0).abs() < 1e-12);
        assert!(l[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = random_spd(&mut rng, 8);
            let back = spd_exp(&spd_log(&a)).unwrap();
            assert!((back.matrix() - a.matrix()).norm() < 1e-8);
            assert!((oracle_round_trip(a.matrix()) - a.matrix()).norm() < 1e-8);
        }
    }

    #[test]
    fn non_symmetric_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(SpdMatrix::new(m.clone()).is_err());
        assert!(spd_exp(&m).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(SpdMatrix::new(indefinite), Err(Error::NotSpd(_))));
    }

    #[test]
    fn distance_examples() {
        let a = SpdMatrix::from_diagonal(&[2.0, 3.0]).unwrap();
        assert!(geodesic_distance(&a, &a).unwrap() < 1e-14);
        let b = SpdMatrix::from_diagonal(&[E * E, 1.0]).unwrap();
        let d = geodesic_distance(&SpdMatrix::identity(2), &b).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert!(geodesic_distance(&a, &SpdMatrix::identity(3)).is_err());
    }

    #[test]
    fn log_euclidean_matches_on_commuting_pairs() {
        let a = SpdMatrix::from_diagonal(&[2.0, 0.5, 4.0]).unwrap();
        let b = SpdMatrix::from_diagonal(&[1.0, 3.0, 0.25]).unwrap();
        let ai = distance(&a, &b, Metric::AffineInvariant).unwrap();
        let le = distance(&a, &b, Metric::LogEuclidean).unwrap();
        assert!((ai - le).abs() < 1e-12);
    }

    #[test]
    fn distance_symmetry_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let (a, b, c) = (random_spd(&mut rng, 4), random_spd(&mut rng, 4), random_spd(&mut rng, 4));
            let ab = geodesic_distance(&a, &b).unwrap();
            assert!((ab - geodesic_distance(&b, &a).unwrap()).abs() < 1e-10);
            let ac = geodesic_distance(&a, &c).unwrap();
            let bc = geodesic_distance(&b, &c).unwrap();
            assert!(ac <= ab + bc + 1e-8);
        }
    }

    #[test]
    fn log_and_exp_maps_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(&mut rng, 5);
        let b = random_spd(&mut rng, 5);
        let u = log_map(&a, &b).unwrap();
        let back = exp_map(&a, &u).unwrap();
        assert!((back.matrix() - b.matrix()).norm() < 1e-9);
        // |Log_A B|_A equals the distance
        let is = a.inv_sqrt();
        let whitened = is.matrix() * &u * is.matrix();
        assert!((whitened.norm() - geodesic_distance(&a, &b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn frechet_singleton_and_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_spd(&mut rng, 4);
        assert_eq!(frechet_mean(std::slice::from_ref(&a), 1e-10, 10).unwrap(), a);
        let b = random_spd(&mut rng, 4);
        let mean = frechet_mean(&[a.clone(), b.clone()], 1e-11, 200).unwrap();
        let mid = geodesic_point(&a, &b, 0.5).unwrap();
        assert!((mean.matrix() - mid.matrix()).norm() < 1e-6);
    }

    #[test]
    fn frechet_commuting_is_geometric_mean() {
        let pts: Vec<SpdMatrix> = [[1.0, 4.0], [4.0, 9.0], [2.0, 0.5]]
            .iter()
            .map(|d| SpdMatrix::from_diagonal(d).unwrap())
            .collect();
        let mean = frechet_mean(&pts, 1e-12, 200).unwrap();
        let g0 = (1.0f64 * 4.0 * 2.0).powf(1.0 / 3.0);
        let g1 = (4.0f64 * 9.0 * 0.5).powf(1.0 / 3.0);
        assert!((mean.matrix()[(0, 0)] - g0).abs() < 1e-9);
        assert!((mean.matrix()[(1, 1)] - g1).abs() < 1e-9);
    }

    #[test]
    fn frechet_nonconvergence_carries_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..4).map(|_| random_spd(&mut rng, 3)).collect();
        match frechet_mean(&pts, 1e-300, 2) {
            Err(Error::NoConvergence { last: Some(m), .. }) => assert_eq!(m.dim(), 3),
            other => panic!("expected NoConvergence, got {other:?}"),
        }
        assert!(frechet_mean(&[], 1e-8, 10).is_err());
    }

    #[test]
    fn curvature_flat_and_nonnegative() {
        let a = SpdMatrix::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let b = SpdMatrix::from_diagonal(&[2.0, 0.5, 1.0]).unwrap();
        let c = SpdMatrix::from_diagonal(&[0.3, 5.0, 2.0]).unwrap();
        assert!(curvature_proxy(&a, &b, &c).unwrap().abs() < 1e-8);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let (a, b, c) = (random_spd(&mut rng, 4), random_spd(&mut rng, 4), random_spd(&mut rng, 4));
            assert!(curvature_proxy(&a, &b, &c).unwrap() >= -1e-8);
        }
        assert!(curvature_proxy(&a, &b, &b).is_err());
    }

    #[test]
    fn curvature_vanishes_for_close_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_spd(&mut rng, 3);
        let b = geodesic_point(&a, &random_spd(&mut rng, 3), 1e-3).unwrap();
        let c = geodesic_point(&a, &random_spd(&mut rng, 3), 1e-3).unwrap();
        let delta = curvature_proxy(&a, &b, &c).unwrap();
        assert!(delta.abs() < 1e-4, "delta {delta}");
    }

    #[test]
    fn group_element_checks() {
        assert!(GroupElement::new(DMatrix::zeros(2, 2)).is_err());
        let g = GroupElement::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0])).unwrap();
        let a = SpdMatrix::identity(2);
        let ga = g.act(&a).unwrap();
        assert!((ga.matrix() - g.matrix() * g.matrix().transpose()).norm() < 1e-14);
        assert!(g.act(&SpdMatrix::identity(3)).is_err());
    }

    #[test]
    fn embedding_checks() {
        assert!(embed_modality(vec![], Modality::Eeg).is_err());
        let one = embed_modality(vec![SpdMatrix::identity(2)], Modality::Eeg).unwrap();
        assert_eq!(one.len(), 1);
        assert!(embed_modality(vec![SpdMatrix::identity(2), SpdMatrix::identity(3)], Modality::Eeg).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<_> = (0..4).map(|_| random_spd(&mut rng, 3)).collect();
        let e = embed_modality(pts.clone(), Modality::Eeg).unwrap();
        let d = e.pairwise_distances().unwrap();
        assert_eq!(d[(1, 3)], geodesic_distance(&pts[1], &pts[3]).unwrap());
    }

    #[test]
    fn spd_csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_spd(&mut rng, 3);
        let text = spd_to_csv(&a);
        assert!(text.starts_with("# dim,3\n"));
        assert_eq!(spd_from_csv(&text).unwrap(), a);
        assert!(spd_from_csv("1,0\n0,1\n").is_err());
    }
}

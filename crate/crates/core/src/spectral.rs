//! Low-rank eigenspace estimation: diagonal deletion, truncated symmetric
//! eigendecomposition and the heteroskedastic PCA iteration.

use log::debug;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 20;

const SYMMETRY_TOL: f64 = 1e-8;
const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_SWEEPS: usize = 10_000;

/// How the embedding was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMethod {
    HeteroPca { iterations: usize },
    PlainSvd,
}

/// Top-K eigenvectors of the (debiased) Gram matrix of the data.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// N x K with orthonormal columns.
    pub u: DMatrix<f64>,
    /// Nonincreasing.
    pub eigenvalues: Vec<f64>,
    pub method: EmbeddingMethod,
    /// `||M^{t+1} - M^t||_F` per HeteroPCA iteration; empty for plain SVD.
    pub convergence: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.u.row(i).norm()
    }
}

fn require_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// H(M): copy of `m` with its diagonal set to zero.
pub fn hollow(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_square(m)?;
    let mut h = m.clone();
    h.fill_diagonal(0.0);
    Ok(h)
}

/// D(M) = M - H(M): the diagonal part of `m`.
pub fn diagonal_part(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_square(m)?;
    Ok(DMatrix::from_diagonal(&m.diagonal()))
}

/// The `k` algebraically largest eigenpairs of a symmetric matrix, sorted
/// by decreasing eigenvalue.
pub fn truncated_eig(m: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    require_square(m)?;
    let n = m.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("rank {k} outside 1..={n}")));
    }
    let scale = m.amax().max(1.0);
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_SWEEPS)
        .ok_or_else(|| Error::Convergence(format!("symmetric eigensolver on {n}x{n}")))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let order = &order[..k];
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((vectors, values))
}

/// Rank-K reconstruction `V diag(values) V^T`.
pub fn low_rank(vectors: &DMatrix<f64>, values: &[f64]) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (mut col, &v) in scaled.column_iter_mut().zip(values) {
        col *= v;
    }
    scaled * vectors.transpose()
}

fn check_rank(r: &DMatrix<f64>, k: usize) -> Result<()> {
    let max = r.nrows().min(r.ncols());
    if k == 0 || k > max {
        return Err(Error::InvalidArgument(format!("rank {k} outside 1..={max}")));
    }
    Ok(())
}

/// Heteroskedastic PCA on the rows of `r`.
///
/// Starts from the hollowed Gram matrix and, for `iterations` rounds,
/// replaces its diagonal with the diagonal of its best rank-K
/// approximation. Off-diagonal entries never change.
pub fn hetero_pca(r: &DMatrix<f64>, k: usize, iterations: usize) -> Result<SpectralEmbedding> {
    check_rank(r, k)?;
    let gram = r * r.transpose();
    let mut m = hollow(&gram)?;
    let mut convergence = Vec::with_capacity(iterations);

    for t in 0..iterations {
        let (vectors, values) = truncated_eig(&m, k)?;
        let mut delta_sq = 0.0;
        for i in 0..m.nrows() {
            let d: f64 = (0..k).map(|c| values[c] * vectors[(i, c)].powi(2)).sum();
            delta_sq += (d - m[(i, i)]).powi(2);
            m[(i, i)] = d;
        }
        let delta = delta_sq.sqrt();
        debug!("heteropca iteration {t}: ||M(t+1) - M(t)||_F = {delta:e}");
        convergence.push(delta);
    }

    let (u, eigenvalues) = truncated_eig(&m, k)?;
    Ok(SpectralEmbedding {
        u,
        eigenvalues,
        method: EmbeddingMethod::HeteroPca { iterations },
        convergence,
    })
}

/// Top-K left singular vectors of `r`, via the eigendecomposition of `r r^T`.
/// Reported eigenvalues are the squared singular values.
pub fn plain_svd(r: &DMatrix<f64>, k: usize) -> Result<SpectralEmbedding> {
    check_rank(r, k)?;
    let gram = r * r.transpose();
    let (u, eigenvalues) = truncated_eig(&gram, k)?;
    Ok(SpectralEmbedding {
        u,
        eigenvalues,
        method: EmbeddingMethod::PlainSvd,
        convergence: Vec::new(),
    })
}

/// `||U U^T - V V^T||_F` for two matrices with orthonormal columns.
pub fn projection_distance(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let cross = (u.transpose() * v).norm_squared();
    (u.ncols() as f64 + v.ncols() as f64 - 2.0 * cross).max(0.0).sqrt()
}

/// Sines of the principal angles between the column spaces of two
/// orthonormal bases of equal width, in decreasing order.
pub fn principal_angle_sines(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Vec<f64> {
    let cosines = (u.transpose() * v).singular_values();
    let mut sines: Vec<f64> = cosines.iter().map(|c| (1.0 - c * c).max(0.0).sqrt()).collect();
    sines.sort_by(|a, b| b.total_cmp(a));
    sines
}

/// Orthonormal basis of the column space of `a` (thin QR; `a` full column rank).
pub fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

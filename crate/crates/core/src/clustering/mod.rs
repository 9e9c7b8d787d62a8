//! Spectral clustering of subjects: embedding, row normalization, k-means.

mod kmeans;
mod metrics;

pub use kmeans::{canonicalize_labels, kmeans, ClusterAssignment, DEFAULT_MAX_ITER, DEFAULT_RESTARTS};
pub use metrics::{
    best_permutation, misclustering_rate, misclustering_rate_assignment,
    misclustering_rate_enumerate, rand_index, ENUMERATION_MAX_K,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObservationMatrix;
use crate::spectral::{self, SpectralEmbedding, DEFAULT_ITERATIONS};

/// Row normalization applied to the embedding before k-means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    L2,
    Score,
    None,
}

/// Handling of rows whose first coordinate vanishes under SCORE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreGuard {
    #[default]
    Error,
    /// Ratios are clamped to +-1e6.
    Clamp,
}

/// Which eigenspace estimator feeds the clustering step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMethod {
    HeteroPca,
    PlainSvd,
}

const DEGENERATE_TOL: f64 = 1e-12;
const SCORE_CLAMP: f64 = 1e6;

pub fn normalize_rows(u: &DMatrix<f64>, mode: NormalizationMode) -> Result<DMatrix<f64>> {
    normalize_rows_with(u, mode, ScoreGuard::Error)
}

/// L2 scales rows to unit length; SCORE divides coordinates 2..K by the
/// first one (output has K-1 columns); None copies the input.
pub fn normalize_rows_with(
    u: &DMatrix<f64>,
    mode: NormalizationMode,
    guard: ScoreGuard,
) -> Result<DMatrix<f64>> {
    let (n, k) = u.shape();
    match mode {
        NormalizationMode::None => Ok(u.clone()),
        NormalizationMode::L2 => {
            let mut out = u.clone();
            for (i, mut row) in out.row_iter_mut().enumerate() {
                let norm = row.norm();
                if norm < DEGENERATE_TOL {
                    return Err(Error::DegenerateRow { row: i });
                }
                row /= norm;
            }
            Ok(out)
        }
        NormalizationMode::Score => {
            if k < 2 {
                return Err(Error::InvalidArgument("SCORE normalization needs K >= 2".into()));
            }
            let mut out = DMatrix::zeros(n, k - 1);
            for i in 0..n {
                let mut lead = u[(i, 0)];
                if lead.abs() < DEGENERATE_TOL {
                    match guard {
                        ScoreGuard::Error => return Err(Error::DegenerateRow { row: i }),
                        ScoreGuard::Clamp => lead = DEGENERATE_TOL.copysign(lead),
                    }
                }
                for c in 1..k {
                    let ratio = u[(i, c)] / lead;
                    out[(i, c - 1)] = match guard {
                        ScoreGuard::Error => ratio,
                        ScoreGuard::Clamp => ratio.clamp(-SCORE_CLAMP, SCORE_CLAMP),
                    };
                }
            }
            Ok(out)
        }
    }
}

/// Tuning knobs for [`hetero_clustering`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringOptions {
    pub iterations: usize,
    pub normalization: NormalizationMode,
    pub method: SpectralMethod,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub score_guard: ScoreGuard,
}

impl Default for ClusteringOptions {
    fn default() -> Self {
        ClusteringOptions {
            iterations: DEFAULT_ITERATIONS,
            normalization: NormalizationMode::L2,
            method: SpectralMethod::HeteroPca,
            restarts: DEFAULT_RESTARTS,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            score_guard: ScoreGuard::Error,
        }
    }
}

/// Top-K embedding of the rows of `r` by the requested method.
pub fn embed(r: &DMatrix<f64>, k: usize, opts: &ClusteringOptions) -> Result<SpectralEmbedding> {
    match opts.method {
        SpectralMethod::HeteroPca => spectral::hetero_pca(r, k, opts.iterations),
        SpectralMethod::PlainSvd => spectral::plain_svd(r, k),
    }
}

/// Clusters the rows of a real-valued data matrix. Returns the assignment
/// and the unnormalized embedding.
pub fn hetero_clustering_matrix(
    r: &DMatrix<f64>,
    k: usize,
    opts: &ClusteringOptions,
) -> Result<(ClusterAssignment, SpectralEmbedding)> {
    let embedding = embed(r, k, opts)?;
    let points = normalize_rows_with(&embedding.u, opts.normalization, opts.score_guard)?;
    let assignment = kmeans(&points, k, opts.restarts, opts.max_iter, opts.seed)?;
    Ok((assignment, embedding))
}

/// Embedding, row normalization and k-means on an observation matrix.
pub fn hetero_clustering(
    obs: &ObservationMatrix,
    k: usize,
    opts: &ClusteringOptions,
) -> Result<(ClusterAssignment, SpectralEmbedding)> {
    hetero_clustering_matrix(&obs.to_matrix(), k, opts)
}

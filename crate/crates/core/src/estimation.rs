//! Degree, item-parameter and variance estimation after clustering, plus
//! summary quantities of an item matrix.

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clustering::{best_permutation, hetero_clustering_matrix, ClusteringOptions};
use crate::error::{Error, Result};
use crate::model::{cluster_sizes, FittedModel, ModelFamily, ObservationMatrix};
use crate::spectral::SpectralEmbedding;

const DEGREE_TOL: f64 = 1e-12;

fn nonempty_sizes(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("label {l} with K = {k}")));
    }
    let sizes = cluster_sizes(labels, k);
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(format!("estimated class {c} is empty")));
    }
    Ok(sizes)
}

/// `w_i = sqrt(|C_{s_i}|) * ||U_i||`.
pub fn estimate_degrees(embedding: &SpectralEmbedding, labels: &[usize]) -> Result<Vec<f64>> {
    let u = &embedding.u;
    if labels.len() != u.nrows() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), u.nrows())));
    }
    let sizes = nonempty_sizes(labels, u.ncols().max(labels.iter().max().map_or(0, |m| m + 1)))?;
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let norm = u.row(i).norm();
            if norm < DEGREE_TOL {
                Err(Error::DegenerateRow { row: i })
            } else {
                Ok((sizes[l] as f64).sqrt() * norm)
            }
        })
        .collect()
}

/// Degree-corrected class means: `theta_jk = mean_{i in C_k} R_ij / w_i`,
/// further divided by the number of trials for the binomial family.
pub fn estimate_theta(
    data: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    degrees: &[f64],
    family: ModelFamily,
) -> Result<DMatrix<f64>> {
    let (n, j) = data.shape();
    if labels.len() != n || degrees.len() != n {
        return Err(Error::Shape(format!(
            "{n} rows, {} labels, {} degrees",
            labels.len(),
            degrees.len()
        )));
    }
    if let Some(i) = degrees.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument(format!("degree of subject {i} is not positive")));
    }
    let sizes = nonempty_sizes(labels, k)?;
    let scale = match family {
        ModelFamily::Binomial { trials } => trials as f64,
        _ => 1.0,
    };
    let mut theta = DMatrix::zeros(j, k);
    for i in 0..n {
        let l = labels[i];
        let inv = 1.0 / degrees[i];
        for c in 0..j {
            theta[(c, l)] += data[(i, c)] * inv;
        }
    }
    for (l, mut col) in theta.column_iter_mut().enumerate() {
        col /= sizes[l] as f64 * scale;
    }
    Ok(theta)
}

/// Plug-in variances of the item estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    /// J x K.
    pub sigma2: DMatrix<f64>,
    /// J x K, false where the item estimate is not positive.
    pub testable: DMatrix<bool>,
    /// Summands `(1 - w_i theta_jk) / w_i` that were negative and set to 0.
    pub clamped_summands: usize,
}

/// Plug-in variance of each item estimate.
///
/// Bernoulli/Binomial(m): `theta / (m |C|^2) * sum_i (1 - w_i theta) / w_i`;
/// Poisson: `theta / |C|^2 * sum_i 1 / w_i`.
pub fn estimate_variances(
    theta_hat: &DMatrix<f64>,
    labels: &[usize],
    degrees: &[f64],
    family: ModelFamily,
) -> Result<VarianceEstimate> {
    let (j, k) = theta_hat.shape();
    if labels.len() != degrees.len() {
        return Err(Error::Shape("labels and degrees differ in length".into()));
    }
    let sizes = nonempty_sizes(labels, k)?;
    let members: Vec<Vec<f64>> = (0..k)
        .map(|c| labels.iter().zip(degrees).filter(|(&l, _)| l == c).map(|(_, &w)| w).collect())
        .collect();
    let inv_sums: Vec<f64> = members.iter().map(|ws| ws.iter().map(|w| 1.0 / w).sum()).collect();

    let mut sigma2 = DMatrix::zeros(j, k);
    let mut testable = DMatrix::from_element(j, k, true);
    let mut clamped = 0;
    for c in 0..k {
        let size_sq = (sizes[c] * sizes[c]) as f64;
        for f in 0..j {
            let t = theta_hat[(f, c)];
            if !(t > 0.0) {
                testable[(f, c)] = false;
                continue;
            }
            sigma2[(f, c)] = match family {
                ModelFamily::Poisson => t / size_sq * inv_sums[c],
                ModelFamily::Bernoulli | ModelFamily::Binomial { .. } => {
                    let m = family.trials().unwrap_or(1) as f64;
                    let sum: f64 = members[c]
                        .iter()
                        .map(|&w| {
                            let term = (1.0 - w * t) / w;
                            if term < 0.0 {
                                clamped += 1;
                                0.0
                            } else {
                                term
                            }
                        })
                        .sum();
                    t / (m * size_sq) * sum
                }
            };
        }
    }
    if clamped > 0 {
        debug!("clamped {clamped} negative variance summands at zero");
    }
    Ok(VarianceEstimate { sigma2, testable, clamped_summands: clamped })
}

/// Separation and conditioning summaries of an item matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Smallest Euclidean distance between two columns.
    pub delta: f64,
    /// K-th singular value.
    pub sigma_star: f64,
    /// Largest over K-th singular value.
    pub kappa: f64,
    /// Row incoherence `J max_j ||Theta_j||^2 / ||Theta||_F^2`.
    pub mu_theta: f64,
    pub theta_max: f64,
}

pub fn diagnostics(theta: &DMatrix<f64>) -> Result<Diagnostics> {
    let (j, k) = theta.shape();
    if k < 2 {
        return Err(Error::InvalidArgument("diagnostics need K >= 2".into()));
    }
    if k > j {
        return Err(Error::Shape(format!("{j}x{k} item matrix has fewer rows than classes")));
    }
    let frob_sq = theta.norm_squared();
    if frob_sq == 0.0 {
        return Err(Error::InvalidArgument("item matrix is identically zero".into()));
    }
    let mut delta = f64::INFINITY;
    for a in 0..k {
        for b in (a + 1)..k {
            delta = delta.min((theta.column(a) - theta.column(b)).norm());
        }
    }
    let mut sv: Vec<f64> = theta.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let (s1, sk) = (sv[0], sv[k - 1]);
    if sk < 1e-12 * s1 {
        return Err(Error::RankDeficient { ratio: sk / s1 });
    }
    let row_max = (0..j).map(|r| theta.row(r).norm_squared()).fold(0.0, f64::max);
    Ok(Diagnostics {
        delta,
        sigma_star: sk,
        kappa: s1 / sk,
        mu_theta: j as f64 * row_max / frob_sq,
        theta_max: theta.max(),
    })
}

/// Reorders the columns of `theta_hat` (indexed by estimated labels) to match
/// the classes of `truth_labels`.
pub fn align_columns(theta_hat: &DMatrix<f64>, truth_labels: &[usize], labels_hat: &[usize]) -> Result<DMatrix<f64>> {
    let perm = best_permutation(truth_labels, labels_hat)?;
    let k = theta_hat.ncols();
    let mut aligned = DMatrix::zeros(theta_hat.nrows(), k);
    for (hat, &truth) in perm.iter().enumerate().take(k) {
        if truth < k {
            aligned.set_column(truth, &theta_hat.column(hat));
        }
    }
    Ok(aligned)
}

/// `min_Pi ||theta_hat - theta Pi||_max` with the permutation taken from the
/// best label matching.
pub fn aligned_max_error(
    theta_hat: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    truth_labels: &[usize],
    labels_hat: &[usize],
) -> Result<f64> {
    let aligned = align_columns(theta_hat, truth_labels, labels_hat)?;
    if aligned.shape() != theta.shape() {
        return Err(Error::Shape("estimated and true item matrices differ in shape".into()));
    }
    Ok((aligned - theta).amax())
}

/// Fits the data matrix end to end: clustering, degrees, items, variances.
pub fn fit_matrix(
    data: &DMatrix<f64>,
    family: ModelFamily,
    k: usize,
    opts: &ClusteringOptions,
) -> Result<(FittedModel, SpectralEmbedding)> {
    let (assignment, embedding) = hetero_clustering_matrix(data, k, opts)?;
    let model = fit_with_labels(data, family, &embedding, &assignment.labels, k)?;
    Ok((model, embedding))
}

pub fn fit(obs: &ObservationMatrix, k: usize, opts: &ClusteringOptions) -> Result<(FittedModel, SpectralEmbedding)> {
    fit_matrix(&obs.to_matrix(), obs.family(), k, opts)
}

/// Estimation stage given labels and the embedding used for degrees.
pub fn fit_with_labels(
    data: &DMatrix<f64>,
    family: ModelFamily,
    embedding: &SpectralEmbedding,
    labels: &[usize],
    k: usize,
) -> Result<FittedModel> {
    let degrees_hat = estimate_degrees(embedding, labels)?;
    let theta_hat = estimate_theta(data, labels, k, &degrees_hat, family)?;
    let var = estimate_variances(&theta_hat, labels, &degrees_hat, family)?;
    Ok(FittedModel {
        labels_hat: labels.to_vec(),
        degrees_hat,
        theta_hat,
        sigma2_hat: var.sigma2,
        testable: var.testable,
        cluster_sizes: cluster_sizes(labels, k),
        family,
        clamped_summands: var.clamped_summands,
    })
}

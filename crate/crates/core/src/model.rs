//! Data model shared by the rest of the crate.
//!
//! Labels are 0-based everywhere in the library; the CLI converts to and from
//! the 1-based labels used in files.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response distribution of the entries of the data matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Bernoulli,
    Binomial { trials: u32 },
    Poisson,
}

impl ModelFamily {
    pub fn binomial(trials: u32) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidArgument("binomial trials must be >= 1".into()));
        }
        Ok(ModelFamily::Binomial { trials })
    }

    /// Largest admissible response, `None` when unbounded.
    pub fn max_value(&self) -> Option<u32> {
        match *self {
            ModelFamily::Bernoulli => Some(1),
            ModelFamily::Binomial { trials } => Some(trials),
            ModelFamily::Poisson => None,
        }
    }

    /// Number of trials `m` (1 for Bernoulli). Poisson has none.
    pub fn trials(&self) -> Option<u32> {
        match *self {
            ModelFamily::Bernoulli => Some(1),
            ModelFamily::Binomial { trials } => Some(trials),
            ModelFamily::Poisson => None,
        }
    }

    /// Families whose mean parameter is a probability.
    pub fn is_bounded(&self) -> bool {
        !matches!(self, ModelFamily::Poisson)
    }

    pub fn name(&self) -> String {
        match *self {
            ModelFamily::Bernoulli => "bernoulli".into(),
            ModelFamily::Binomial { trials } => format!("binomial({trials})"),
            ModelFamily::Poisson => "poisson".into(),
        }
    }
}

/// N x J matrix of nonnegative integer responses, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    values: Vec<u32>,
    rows: usize,
    cols: usize,
    family: ModelFamily,
}

impl ObservationMatrix {
    /// Builds and validates a matrix from row-major values.
    pub fn new(values: Vec<u32>, rows: usize, cols: usize, family: ModelFamily) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        let obs = ObservationMatrix { values, rows, cols, family };
        validate(&obs)?;
        Ok(obs)
    }

    pub fn from_rows(rows: &[Vec<u32>], family: ModelFamily) -> Result<Self> {
        let n = rows.len();
        let j = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * j);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != j {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {j}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(values, n, j, family)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn n_subjects(&self) -> usize {
        self.rows
    }

    pub fn n_features(&self) -> usize {
        self.cols
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// Dense floating-point copy used by the linear-algebra routines.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.values.iter().map(|&v| v as f64))
    }
}

/// Checks the dimension and range invariants of an observation matrix.
pub fn validate(obs: &ObservationMatrix) -> Result<()> {
    if obs.rows < 2 || obs.cols < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 subjects and 2 features, got {}x{}",
            obs.rows, obs.cols
        )));
    }
    if let Some(max) = obs.family.max_value() {
        if let Some(pos) = obs.values.iter().position(|&v| v > max) {
            let (row, col) = (pos / obs.cols, pos % obs.cols);
            return Err(Error::Domain {
                row,
                col,
                msg: format!(
                    "value {} exceeds {} for the {} family",
                    obs.values[pos],
                    max,
                    obs.family.name()
                ),
            });
        }
    }
    Ok(())
}

/// Counts members of each of `k` classes.
pub fn cluster_sizes(labels: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

/// One-hot membership matrix Z (N x K).
pub fn labels_to_onehot(labels: &[usize], k: usize) -> Result<DMatrix<f64>> {
    let mut z = DMatrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::InvalidArgument(format!("label {l} at row {i} is >= K={k}")));
        }
        z[(i, l)] = 1.0;
    }
    Ok(z)
}

pub fn onehot_to_labels(z: &DMatrix<f64>) -> Result<Vec<usize>> {
    (0..z.nrows())
        .map(|i| {
            let row = z.row(i);
            let ones: Vec<usize> = (0..z.ncols()).filter(|&k| row[k] == 1.0).collect();
            let zeros = (0..z.ncols()).filter(|&k| row[k] == 0.0).count();
            if ones.len() == 1 && zeros + 1 == z.ncols() {
                Ok(ones[0])
            } else {
                Err(Error::InvalidArgument(format!("row {i} of Z is not one-hot")))
            }
        })
        .collect()
}

/// Parameters of a generated data set.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub labels: Vec<usize>,
    pub degrees: Vec<f64>,
    /// J x K item parameters.
    pub theta: DMatrix<f64>,
    pub k: usize,
}

impl GroundTruth {
    /// Verifies label coverage, probability bounds and the per-class
    /// normalization `sum_{i in C_k} w_i^2 = |C_k|`.
    pub fn check(&self, family: ModelFamily) -> Result<()> {
        let n = self.labels.len();
        if self.degrees.len() != n {
            return Err(Error::Shape("degrees and labels differ in length".into()));
        }
        if self.theta.ncols() != self.k {
            return Err(Error::Shape("theta has the wrong number of classes".into()));
        }
        let sizes = cluster_sizes(&self.labels, self.k);
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster(format!("class {k} has no members")));
        }
        if self.degrees.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("degrees must be positive".into()));
        }
        let mut sumsq = vec![0.0; self.k];
        for (&l, &w) in self.labels.iter().zip(&self.degrees) {
            sumsq[l] += w * w;
        }
        for (k, (&s, &size)) in sumsq.iter().zip(&sizes).enumerate() {
            if ((s - size as f64) / size as f64).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "class {k}: sum of squared degrees {s} != size {size}"
                )));
            }
        }
        if family.is_bounded() {
            let theta_max_per_class: Vec<f64> = (0..self.k)
                .map(|k| self.theta.column(k).iter().cloned().fold(0.0, f64::max))
                .collect();
            for (i, (&l, &w)) in self.labels.iter().zip(&self.degrees).enumerate() {
                if w * theta_max_per_class[l] > 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "subject {i}: success probability exceeds 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Noiseless mean matrix `Omega Z Theta^T` (N x J).
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        let n = self.labels.len();
        let j = self.theta.nrows();
        DMatrix::from_fn(n, j, |i, c| self.degrees[i] * self.theta[(c, self.labels[i])])
    }
}

/// Output of the full clustering and estimation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub labels_hat: Vec<usize>,
    pub degrees_hat: Vec<f64>,
    /// J x K.
    pub theta_hat: DMatrix<f64>,
    /// J x K plug-in variances; zero where not testable.
    pub sigma2_hat: DMatrix<f64>,
    /// J x K mask, false where the item estimate is not positive.
    pub testable: DMatrix<bool>,
    pub cluster_sizes: Vec<usize>,
    pub family: ModelFamily,
    /// Variance summands clamped at zero because `1 - w_i theta_jk < 0`.
    pub clamped_summands: usize,
}

impl FittedModel {
    pub fn k(&self) -> usize {
        self.cluster_sizes.len()
    }

    /// True when some estimated class is empty.
    pub fn is_degenerate(&self) -> bool {
        self.cluster_sizes.iter().any(|&s| s == 0)
    }

    /// A feature is testable when all of its K estimates are positive.
    pub fn feature_testable(&self, j: usize) -> bool {
        self.testable.row(j).iter().all(|&t| t)
    }
}

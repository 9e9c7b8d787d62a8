use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ModelFamily, ObservationMatrix};

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct JmlFit {
    pub labels: Vec<usize>,
    /// J x K, clamped to `[1e-10, 1 - 1e-10]`.
    pub theta: DMatrix<f64>,
    /// Joint log-likelihood after each sweep.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

fn update_theta(obs: &ObservationMatrix, labels: &[usize], prev: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, j) = (obs.n_subjects(), obs.n_features());
    let k = prev.ncols();
    let mut sums = DMatrix::<f64>::zeros(j, k);
    let mut counts = vec![0usize; k];
    for i in 0..n {
        let l = labels[i];
        counts[l] += 1;
        for (c, &v) in obs.row(i).iter().enumerate() {
            sums[(c, l)] += f64::from(v);
        }
    }
    DMatrix::from_fn(j, k, |c, l| {
        if counts[l] == 0 {
            prev[(c, l)]
        } else {
            (sums[(c, l)] / counts[l] as f64).clamp(EPS, 1.0 - EPS)
        }
    })
}

fn row_loglik(row: &[u32], log_p: &DMatrix<f64>, log_q: &DMatrix<f64>, l: usize) -> f64 {
    row.iter()
        .enumerate()
        .map(|(c, &v)| if v == 1 { log_p[(c, l)] } else { log_q[(c, l)] })
        .sum()
}

/// Joint log-likelihood of the degree-free binary model.
pub fn joint_loglik(obs: &ObservationMatrix, labels: &[usize], theta: &DMatrix<f64>) -> f64 {
    let log_p = theta.map(|t| t.clamp(EPS, 1.0 - EPS).ln());
    let log_q = theta.map(|t| (1.0 - t.clamp(EPS, 1.0 - EPS)).ln());
    (0..obs.n_subjects()).map(|i| row_loglik(obs.row(i), &log_p, &log_q, labels[i])).sum()
}

/// Alternates class-mean item updates and likelihood-argmax label updates
/// until the labels stop changing or `max_iter` sweeps have run. Ties in the
/// reassignment go to the lowest class index.
pub fn jml_fit(obs: &ObservationMatrix, k: usize, init_labels: &[usize], max_iter: usize) -> Result<JmlFit> {
    if obs.family() != ModelFamily::Bernoulli {
        return Err(Error::Family { expected: "bernoulli".into(), found: obs.family().name() });
    }
    if k == 0 || init_labels.len() != obs.n_subjects() || init_labels.iter().any(|&l| l >= k) {
        return Err(Error::InvalidArgument("initial labels must have length N and values < K".into()));
    }
    let mut labels = init_labels.to_vec();
    let mut theta = DMatrix::from_element(obs.n_features(), k, 0.5);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        theta = update_theta(obs, &labels, &theta);
        let log_p = theta.map(f64::ln);
        let log_q = theta.map(|t| (1.0 - t).ln());
        let mut changed = false;
        let mut total = 0.0;
        for (i, label) in labels.iter_mut().enumerate() {
            let row = obs.row(i);
            let mut best = (*label, row_loglik(row, &log_p, &log_q, *label));
            for l in 0..k {
                let ll = row_loglik(row, &log_p, &log_q, l);
                if ll > best.1 || (ll == best.1 && l < best.0) {
                    best = (l, ll);
                }
            }
            if best.0 != *label {
                changed = true;
                *label = best.0;
            }
            total += best.1;
        }
        trace.push(total);
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(JmlFit { labels, theta, loglik_trace: trace, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_data_one_sweep() {
        let rows: Vec<Vec<u32>> = (0..6).map(|i| if i < 3 { vec![1, 1, 0, 0] } else { vec![0, 0, 1, 1] }).collect();
        let obs = ObservationMatrix::from_rows(&rows, ModelFamily::Bernoulli).unwrap();
        let labels = [0, 0, 0, 1, 1, 1];
        let fit = jml_fit(&obs, 2, &labels, 50).unwrap();
        assert_eq!(fit.labels, labels);
        assert_eq!(fit.loglik_trace.len(), 1);
        assert!(fit.converged);
        assert_eq!(fit.theta[(0, 0)], 1.0 - EPS);
        assert_eq!(fit.theta[(0, 1)], EPS);
    }

    #[test]
    fn single_class_gives_column_means() {
        let obs = ObservationMatrix::from_rows(&[vec![1, 0], vec![1, 1], vec![0, 0], vec![1, 0]], ModelFamily::Bernoulli).unwrap();
        let fit = jml_fit(&obs, 1, &[0; 4], 10).unwrap();
        assert_eq!(fit.loglik_trace.len(), 1);
        assert!((fit.theta[(0, 0)] - 0.75).abs() < 1e-15 && (fit.theta[(1, 0)] - 0.25).abs() < 1e-15);
        let expected = 2.0 * (3.0 * 0.75f64.ln() + 0.25f64.ln());
        assert!((fit.loglik_trace[0] - expected).abs() < 1e-12);
        assert!((joint_loglik(&obs, &fit.labels, &fit.theta) - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_other_families() {
        let obs = ObservationMatrix::from_rows(&[vec![1, 0], vec![2, 1]], ModelFamily::Poisson).unwrap();
        assert!(matches!(jml_fit(&obs, 1, &[0, 0], 5), Err(Error::Family { .. })));
        let obs = ObservationMatrix::from_rows(&[vec![1, 0], vec![0, 1]], ModelFamily::Bernoulli).unwrap();
        assert!(jml_fit(&obs, 2, &[0, 2], 5).is_err());
    }
}

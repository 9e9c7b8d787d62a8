//! Tests for class-invariance of item parameters: pairwise and per-feature
//! statistics, the global max test with its two calibrations, and
//! Benjamini-Hochberg multiple testing.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{chi2_isf, chi2_sf, gumbel_cdf, gumbel_quantile};

/// `M * C(K,2)` at or below which the chi-square-max calibration is used in
/// automatic mode.
pub const AUTO_REGIME_CUTOFF: f64 = 30.0;

/// Null calibration of the global statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ChiSquareMax,
    Gumbel,
}

/// Requested calibration; `Auto` picks by the number of pairwise tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeChoice {
    #[default]
    Auto,
    ChiSquareMax,
    Gumbel,
}

fn pairs(k: usize) -> f64 {
    (k * k.saturating_sub(1) / 2) as f64
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("significance level {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// `(theta_jk1 - theta_jk2)^2 / (sigma2_jk1 + sigma2_jk2)`.
pub fn pairwise_stat(theta_hat: &DMatrix<f64>, sigma2_hat: &DMatrix<f64>, j: usize, k1: usize, k2: usize) -> Result<f64> {
    let (t1, t2) = (theta_hat[(j, k1)], theta_hat[(j, k2)]);
    let var = sigma2_hat[(j, k1)] + sigma2_hat[(j, k2)];
    if !(t1 > 0.0 && t2 > 0.0 && var > 0.0) {
        return Err(Error::NotTestable { feature: j });
    }
    Ok((t1 - t2).powi(2) / var)
}

/// Largest pairwise statistic of feature `j` over all class pairs.
pub fn feature_stat(theta_hat: &DMatrix<f64>, sigma2_hat: &DMatrix<f64>, j: usize) -> Result<f64> {
    let k = theta_hat.ncols();
    if k < 2 {
        return Err(Error::InvalidArgument("testing needs K >= 2".into()));
    }
    if theta_hat.row(j).iter().any(|&t| !(t > 0.0)) {
        return Err(Error::NotTestable { feature: j });
    }
    let mut best: f64 = 0.0;
    for k1 in 0..k {
        for k2 in (k1 + 1)..k {
            best = best.max(pairwise_stat(theta_hat, sigma2_hat, j, k1, k2)?);
        }
    }
    Ok(best)
}

/// Threshold `q` with `F_{chi2_1}(q) = (1 - alpha)^(1 / (M C(K,2)))`, so the
/// maximum of `M C(K,2)` independent chi2_1 variables exceeds it with
/// probability `alpha`.
pub fn chi_max_threshold(m: usize, k: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if m == 0 || k < 2 {
        return Err(Error::InvalidArgument(format!("M = {m}, K = {k}")));
    }
    let tests = m as f64 * pairs(k);
    // 1 - (1 - alpha)^(1/tests) without cancellation
    let tail = -((-alpha).ln_1p() / tests).exp_m1();
    Ok(chi2_isf(tail, 1.0))
}

/// Centering constant `2L - ln L - ln pi` with `L = ln M + ln C(K,2)`.
pub fn gumbel_center(m: usize, k: usize) -> Result<f64> {
    let l = (m as f64).ln() + pairs(k).ln();
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Gumbel calibration needs M C(K,2) >= 2 (M = {m}, K = {k})"
        )));
    }
    Ok(2.0 * l - l.ln() - std::f64::consts::PI.ln())
}

/// `2 g_{1-alpha} + c_{M,K}` with `g_p = -ln(-ln p)`.
pub fn gumbel_threshold(m: usize, k: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(2.0 * gumbel_quantile(1.0 - alpha) + gumbel_center(m, k)?)
}

/// `1 - F_{chi2_1}(t)^C(K,2)`: p-value of one feature's max statistic.
pub fn feature_pvalue(t: f64, k: usize) -> f64 {
    chi_max_pvalue(t, 1, k)
}

/// `1 - F_{chi2_1}(t)^(M C(K,2))`.
pub fn chi_max_pvalue(t: f64, m: usize, k: usize) -> f64 {
    if !(t > 0.0) {
        return 1.0;
    }
    let tests = m as f64 * pairs(k);
    let tail = chi2_sf(t, 1.0);
    (-(tests * (-tail).ln_1p()).exp_m1()).clamp(0.0, 1.0)
}

/// `1 - G((t - c_{M,K}) / 2)` with `G` the standard Gumbel CDF.
pub fn gumbel_pvalue(t: f64, m: usize, k: usize) -> Result<f64> {
    let c = gumbel_center(m, k)?;
    Ok((1.0 - gumbel_cdf((t - c) / 2.0)).clamp(0.0, 1.0))
}

/// Step-up BH procedure. Returns the rejected indices in increasing order.
pub fn benjamini_hochberg(pvalues: &[f64], alpha: f64) -> Result<Vec<usize>> {
    check_alpha(alpha)?;
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let cutoff = (1..=m)
        .rev()
        .find(|&rank| pvalues[order[rank - 1]] <= alpha * rank as f64 / m as f64)
        .map(|rank| pvalues[order[rank - 1]]);
    Ok(match cutoff {
        Some(c) => (0..m).filter(|&i| pvalues[i] <= c).collect(),
        None => Vec::new(),
    })
}

/// Outcome of a global test over a feature set. Feature ids are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    /// Tested (testable) features.
    pub feature_ids: Vec<usize>,
    pub per_feature_stats: Vec<f64>,
    pub per_feature_pvalues: Vec<f64>,
    pub global_stat: f64,
    pub global_pvalue: f64,
    pub threshold: f64,
    pub reject: bool,
    pub regime: Regime,
    pub alpha: f64,
    pub bh_rejections: Vec<usize>,
    /// Requested features excluded because some estimate is not positive.
    pub not_testable: Vec<usize>,
}

/// Tests `H0: theta_j1 = ... = theta_jK for all j in features`.
pub fn global_test(
    theta_hat: &DMatrix<f64>,
    sigma2_hat: &DMatrix<f64>,
    features: &[usize],
    alpha: f64,
    regime: RegimeChoice,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    let (j, k) = theta_hat.shape();
    if sigma2_hat.shape() != (j, k) {
        return Err(Error::Shape("theta and sigma2 differ in shape".into()));
    }
    if let Some(&f) = features.iter().find(|&&f| f >= j) {
        return Err(Error::InvalidArgument(format!("feature {f} out of range (J = {j})")));
    }
    let mut feature_ids = Vec::new();
    let mut stats = Vec::new();
    let mut not_testable = Vec::new();
    for &f in features {
        match feature_stat(theta_hat, sigma2_hat, f) {
            Ok(t) => {
                feature_ids.push(f);
                stats.push(t);
            }
            Err(Error::NotTestable { .. }) => not_testable.push(f),
            Err(e) => return Err(e),
        }
    }
    if feature_ids.is_empty() {
        return Err(Error::NoTestableFeatures);
    }
    let m = feature_ids.len();
    let regime = match regime {
        RegimeChoice::ChiSquareMax => Regime::ChiSquareMax,
        RegimeChoice::Gumbel => Regime::Gumbel,
        RegimeChoice::Auto if m as f64 * pairs(k) <= AUTO_REGIME_CUTOFF => Regime::ChiSquareMax,
        RegimeChoice::Auto => Regime::Gumbel,
    };
    let global_stat = stats.iter().copied().fold(0.0, f64::max);
    let (threshold, global_pvalue) = match regime {
        Regime::ChiSquareMax => (chi_max_threshold(m, k, alpha)?, chi_max_pvalue(global_stat, m, k)),
        Regime::Gumbel => (gumbel_threshold(m, k, alpha)?, gumbel_pvalue(global_stat, m, k)?),
    };
    let pvalues: Vec<f64> = stats.iter().map(|&t| feature_pvalue(t, k)).collect();
    let bh_rejections = benjamini_hochberg(&pvalues, alpha)?
        .into_iter()
        .map(|i| feature_ids[i])
        .collect();
    Ok(TestReport {
        feature_ids,
        per_feature_stats: stats,
        per_feature_pvalues: pvalues,
        global_stat,
        global_pvalue,
        threshold,
        reject: global_stat > threshold,
        regime,
        alpha,
        bh_rejections,
        not_testable,
    })
}

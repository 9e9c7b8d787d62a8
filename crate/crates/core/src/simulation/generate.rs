use log::debug;
use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Beta, Binomial, Distribution, Gamma, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cluster_sizes, GroundTruth, ModelFamily, ObservationMatrix};
use crate::seed::{derive_seed, rng_from_seed};

/// Law of the subject degrees before the per-class rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DegreeLaw {
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

impl Default for DegreeLaw {
    fn default() -> Self {
        DegreeLaw::Uniform { lo: 0.1, hi: 1.5 }
    }
}

/// Law of the item parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaLaw {
    /// `scale * Beta(a, b)` entrywise.
    ScaledBeta { scale: f64, a: f64, b: f64 },
    /// Gamma with the given shape and rate, entrywise.
    Gamma { shape: f64, rate: f64 },
    /// Fixed J x K matrix, row by row.
    Explicit { rows: Vec<Vec<f64>> },
    /// Rows split into `values.len()` consecutive blocks of equal size;
    /// block `b` has every row equal to `values[b]`.
    Blocks { values: Vec<Vec<f64>> },
}

impl ThetaLaw {
    pub fn bernoulli_default() -> Self {
        ThetaLaw::ScaledBeta { scale: 2.0 / 3.0, a: 0.1, b: 1.0 }
    }

    pub fn poisson_default() -> Self {
        ThetaLaw::Gamma { shape: 0.5, rate: 1.0 }
    }
}

/// Leading rows whose K entries share one value drawn from `Uniform[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NullRows {
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Replaces one row of the item matrix after sampling. `row` is 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowOverride {
    pub row: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub family: ModelFamily,
    pub degree_law: DegreeLaw,
    pub theta_law: ThetaLaw,
    pub null_rows: Option<NullRows>,
    pub overrides: Vec<RowOverride>,
    pub seed: u64,
}

impl GeneratorConfig {
    /// Bernoulli/Poisson defaults: uniform degrees on [0.1, 1.5] and the
    /// family's default item law.
    pub fn standard(n: usize, j: usize, k: usize, family: ModelFamily) -> Self {
        let theta_law = match family {
            ModelFamily::Poisson => ThetaLaw::poisson_default(),
            _ => ThetaLaw::bernoulli_default(),
        };
        GeneratorConfig {
            n,
            j,
            k,
            family,
            degree_law: DegreeLaw::default(),
            theta_law,
            null_rows: None,
            overrides: Vec::new(),
            seed: 0,
        }
    }

    /// Row 0 set to `0.5` in every class (a true null) and row 1 set to
    /// well-separated values (a true alternative).
    pub fn with_null_and_alternative(mut self) -> Self {
        let alt = if self.k == 3 {
            vec![0.1, 0.3, 0.6]
        } else {
            (1..=self.k).map(|c| 0.06 * c as f64).collect()
        };
        self.overrides = vec![
            RowOverride { row: 0, values: vec![0.5; self.k] },
            RowOverride { row: 1, values: alt },
        ];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.j < 2 || self.k == 0 || self.k > self.n {
            return Err(Error::Config(format!(
                "invalid dimensions N={}, J={}, K={}",
                self.n, self.j, self.k
            )));
        }
        match self.degree_law {
            DegreeLaw::Uniform { lo, hi } if !(lo > 0.0 && hi >= lo) => {
                return Err(Error::Config(format!("degree law Uniform[{lo}, {hi}]")))
            }
            DegreeLaw::Constant { value } if !(value > 0.0) => {
                return Err(Error::Config(format!("constant degree {value}")))
            }
            _ => {}
        }
        match &self.theta_law {
            ThetaLaw::ScaledBeta { scale, a, b } if !(*scale >= 0.0 && *a > 0.0 && *b > 0.0) => {
                return Err(Error::Config("beta law needs a, b > 0 and scale >= 0".into()))
            }
            ThetaLaw::Gamma { shape, rate } if !(*shape > 0.0 && *rate > 0.0) => {
                return Err(Error::Config("gamma law needs positive shape and rate".into()))
            }
            ThetaLaw::Explicit { rows } => {
                if rows.len() != self.j || rows.iter().any(|r| r.len() != self.k) {
                    return Err(Error::Config(format!("explicit theta must be {}x{}", self.j, self.k)));
                }
                check_entries(rows.iter().flatten())?;
            }
            ThetaLaw::Blocks { values } => {
                if values.is_empty() || values.len() > self.j || values.iter().any(|r| r.len() != self.k) {
                    return Err(Error::Config("block values must be non-empty rows of length K".into()));
                }
                check_entries(values.iter().flatten())?;
            }
            _ => {}
        }
        if let Some(nr) = self.null_rows {
            if nr.count > self.j || !(nr.lo >= 0.0 && nr.hi >= nr.lo) {
                return Err(Error::Config("invalid null-row block".into()));
            }
        }
        for o in &self.overrides {
            if o.row >= self.j || o.values.len() != self.k {
                return Err(Error::Config(format!(
                    "override of row {} must target a row < J with K values",
                    o.row
                )));
            }
            check_entries(o.values.iter())?;
        }
        Ok(())
    }
}

fn check_entries<'a>(mut vals: impl Iterator<Item = &'a f64>) -> Result<()> {
    if vals.any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Config("item parameters must be finite and nonnegative".into()));
    }
    Ok(())
}

/// A generated data set and the parameters behind it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub obs: ObservationMatrix,
    pub truth: GroundTruth,
    /// Cells whose success probability `w_i theta` exceeded 1 and was capped.
    pub clamped: usize,
}

/// Multiplies each class's degrees by `sqrt(|C_k| / sum w_i^2)` so that the
/// squared degrees of every class sum to its size.
pub fn rescale_degrees(degrees: &[f64], labels: &[usize]) -> Result<Vec<f64>> {
    if degrees.len() != labels.len() {
        return Err(Error::Shape("degrees and labels differ in length".into()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let sizes = cluster_sizes(labels, k);
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(format!("class {c} has no members")));
    }
    let mut sumsq = vec![0.0; k];
    for (&l, &w) in labels.iter().zip(degrees) {
        sumsq[l] += w * w;
    }
    let factors: Vec<f64> = sizes.iter().zip(&sumsq).map(|(&s, &q)| (s as f64 / q).sqrt()).collect();
    Ok(labels.iter().zip(degrees).map(|(&l, &w)| w * factors[l]).collect())
}

fn sample_labels(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = rng_from_seed(seed);
    for _ in 0..1000 {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if cluster_sizes(&labels, k).iter().all(|&s| s > 0) {
            return Ok(labels);
        }
    }
    Err(Error::Config(format!("could not draw {k} non-empty classes from {n} subjects")))
}

fn sample_theta(cfg: &GeneratorConfig, seed: u64) -> Result<DMatrix<f64>> {
    let (j, k) = (cfg.j, cfg.k);
    let mut rng = rng_from_seed(seed);
    let bad = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
    let mut theta = match &cfg.theta_law {
        ThetaLaw::ScaledBeta { scale, a, b } => {
            let beta = Beta::new(*a, *b).map_err(|e| bad(&e))?;
            DMatrix::from_fn(j, k, |_, _| scale * beta.sample(&mut rng))
        }
        ThetaLaw::Gamma { shape, rate } => {
            let gamma = Gamma::new(*shape, 1.0 / rate).map_err(|e| bad(&e))?;
            DMatrix::from_fn(j, k, |_, _| gamma.sample(&mut rng))
        }
        ThetaLaw::Explicit { rows } => DMatrix::from_fn(j, k, |r, c| rows[r][c]),
        ThetaLaw::Blocks { values } => {
            let blocks = values.len();
            DMatrix::from_fn(j, k, |r, c| values[(r * blocks / j).min(blocks - 1)][c])
        }
    };
    if let Some(nr) = cfg.null_rows {
        let unif = Uniform::new_inclusive(nr.lo, nr.hi).map_err(|e| bad(&e))?;
        for r in 0..nr.count {
            let v = unif.sample(&mut rng);
            theta.row_mut(r).fill(v);
        }
    }
    for o in &cfg.overrides {
        for (c, &v) in o.values.iter().enumerate() {
            theta[(o.row, c)] = v;
        }
    }
    Ok(theta)
}

/// Draws labels, degrees, items and responses. Every random component has its
/// own stream derived from `cfg.seed`.
pub fn generate(cfg: &GeneratorConfig) -> Result<Simulated> {
    cfg.validate()?;
    let (n, j, k) = (cfg.n, cfg.j, cfg.k);
    let labels = sample_labels(n, k, derive_seed(cfg.seed, 0))?;

    let raw_degrees: Vec<f64> = match cfg.degree_law {
        DegreeLaw::Uniform { lo, hi } => {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, 1));
            let unif = Uniform::new_inclusive(lo, hi).map_err(|e| Error::Config(e.to_string()))?;
            (0..n).map(|_| unif.sample(&mut rng)).collect()
        }
        DegreeLaw::Constant { value } => vec![value; n],
    };
    let degrees = rescale_degrees(&raw_degrees, &labels)?;
    let theta = sample_theta(cfg, derive_seed(cfg.seed, 2))?;

    let mut rng = rng_from_seed(derive_seed(cfg.seed, 3));
    let mut values = Vec::with_capacity(n * j);
    let mut clamped = 0;
    for i in 0..n {
        let w = degrees[i];
        for c in 0..j {
            let mean = w * theta[(c, labels[i])];
            let draw = match cfg.family {
                ModelFamily::Poisson => {
                    if mean > 0.0 {
                        Poisson::new(mean).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng) as u32
                    } else {
                        0
                    }
                }
                ModelFamily::Bernoulli | ModelFamily::Binomial { .. } => {
                    let p = if mean > 1.0 {
                        clamped += 1;
                        1.0
                    } else {
                        mean
                    };
                    let m = cfg.family.trials().unwrap_or(1);
                    if m == 1 {
                        u32::from(rng.random::<f64>() < p)
                    } else {
                        Binomial::new(u64::from(m), p)
                            .map_err(|e| Error::Config(e.to_string()))?
                            .sample(&mut rng) as u32
                    }
                }
            };
            values.push(draw);
        }
    }
    if clamped > 0 {
        debug!("capped {clamped} success probabilities at 1");
    }
    let obs = ObservationMatrix::new(values, n, j, cfg.family)?;
    Ok(Simulated { obs, truth: GroundTruth { labels, degrees, theta, k }, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescale_examples() {
        let out = rescale_degrees(&[2.0; 4], &[0; 4]).unwrap();
        assert!(out.iter().all(|&w| (w - 1.0).abs() < 1e-15));

        let fixed = [0.5, 1.3228756555322954, 1.0];
        let out = rescale_degrees(&fixed, &[0, 0, 1]).unwrap();
        for (a, b) in out.iter().zip(&fixed) {
            assert!((a - b).abs() < 1e-15);
        }

        let out = rescale_degrees(&[1.0, 3.0], &[0, 0]).unwrap();
        let f = (2.0f64 / 10.0).sqrt();
        assert!((out[0] - f).abs() < 1e-15 && (out[1] - 3.0 * f).abs() < 1e-15);
        assert!((out[0] - 0.4472).abs() < 1e-4 && (out[1] - 1.3416).abs() < 1e-4);
        assert!((out[0].powi(2) + out[1].powi(2) - 2.0).abs() < 1e-14);

        assert!(matches!(rescale_degrees(&[1.0, 1.0], &[0, 2]), Err(Error::EmptyCluster(_))));
    }

    #[test]
    fn zero_items_give_zero_data() {
        let mut cfg = GeneratorConfig::standard(10, 6, 2, ModelFamily::Poisson);
        cfg.degree_law = DegreeLaw::Constant { value: 1.0 };
        cfg.theta_law = ThetaLaw::Explicit { rows: vec![vec![0.0; 2]; 6] };
        let sim = generate(&cfg).unwrap();
        assert!(sim.obs.values().iter().all(|&v| v == 0));
    }

    #[test]
    fn unit_probabilities_give_all_ones() {
        let mut cfg = GeneratorConfig::standard(10, 6, 2, ModelFamily::Bernoulli);
        cfg.degree_law = DegreeLaw::Constant { value: 1.0 };
        cfg.theta_law = ThetaLaw::Explicit { rows: vec![vec![1.0; 2]; 6] };
        let sim = generate(&cfg).unwrap();
        assert!(sim.obs.values().iter().all(|&v| v == 1));
        assert_eq!(sim.clamped, 0);
    }

    #[test]
    fn column_means_concentrate() {
        let mut cfg = GeneratorConfig::standard(2000, 20, 1, ModelFamily::Bernoulli);
        cfg.degree_law = DegreeLaw::Constant { value: 1.0 };
        cfg.theta_law = ThetaLaw::Explicit { rows: vec![vec![0.3]; 20] };
        cfg.seed = 11;
        let sim = generate(&cfg).unwrap();
        for c in 0..20 {
            let mean = (0..2000).map(|i| sim.obs.get(i, c) as f64).sum::<f64>() / 2000.0;
            assert!((mean - 0.3).abs() < 0.031, "column {c}: {mean}");
        }
    }

    #[test]
    fn generated_truth_satisfies_invariants() {
        for (family, seed) in [(ModelFamily::Bernoulli, 1), (ModelFamily::Poisson, 2), (ModelFamily::Binomial { trials: 3 }, 3)] {
            let mut cfg = GeneratorConfig::standard(120, 40, 3, family).with_null_and_alternative();
            cfg.seed = seed;
            let sim = generate(&cfg).unwrap();
            // w * theta may exceed 1; the cap is applied at sampling time
            sim.truth.check(ModelFamily::Poisson).unwrap();
            assert!(sim.obs.values().iter().all(|&v| v <= family.max_value().unwrap_or(u32::MAX)));
            assert_eq!(sim.truth.theta.row(0).iter().copied().collect::<Vec<_>>(), vec![0.5; 3]);
        }
    }

    #[test]
    fn null_rows_are_constant() {
        let mut cfg = GeneratorConfig::standard(30, 60, 3, ModelFamily::Bernoulli);
        cfg.null_rows = Some(NullRows { count: 50, lo: 0.2, hi: 2.0 / 3.0 });
        let theta = generate(&cfg).unwrap().truth.theta;
        for r in 0..50 {
            let row = theta.row(r);
            assert!(row.iter().all(|&v| v == row[0]) && (0.2..=2.0 / 3.0).contains(&row[0]));
        }
    }

    #[test]
    fn blocks_fill_rows() {
        let mut cfg = GeneratorConfig::standard(10, 6, 2, ModelFamily::Poisson);
        cfg.theta_law = ThetaLaw::Blocks { values: vec![vec![0.3, 0.1], vec![0.5, 0.06]] };
        let theta = generate(&cfg).unwrap().truth.theta;
        assert_eq!(theta[(2, 0)], 0.3);
        assert_eq!(theta[(3, 1)], 0.06);
    }

    #[test]
    fn config_errors() {
        let mut cfg = GeneratorConfig::standard(10, 6, 2, ModelFamily::Bernoulli);
        cfg.overrides = vec![RowOverride { row: 6, values: vec![0.1, 0.2] }];
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        cfg.overrides = vec![RowOverride { row: 0, values: vec![0.1] }];
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let cfg = GeneratorConfig::standard(3, 6, 5, ModelFamily::Bernoulli);
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = GeneratorConfig::standard(40, 30, 3, ModelFamily::Poisson);
        assert_eq!(generate(&cfg).unwrap().obs, generate(&cfg).unwrap().obs);
    }
}

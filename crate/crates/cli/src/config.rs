use std::path::Path;

use dhlcm::clustering::{ScoreGuard, DEFAULT_MAX_ITER, DEFAULT_RESTARTS};
use dhlcm::simulation::{DegreeLaw, ExperimentConfig, GeneratorConfig, NullRows, RowOverride, Scenario, ThetaLaw};
use dhlcm::spectral::DEFAULT_ITERATIONS;
use dhlcm::{ClusteringOptions, ModelFamily, NormalizationMode, RegimeChoice, SpectralMethod};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Bernoulli,
    Binomial,
    Poisson,
}

/// A 1-based item-row override.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideEntry {
    pub row: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringSection {
    pub method: SpectralMethod,
    pub normalization: NormalizationMode,
    pub iterations: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub score_clamp: bool,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        ClusteringSection {
            method: SpectralMethod::HeteroPca,
            normalization: NormalizationMode::L2,
            iterations: DEFAULT_ITERATIONS,
            restarts: DEFAULT_RESTARTS,
            max_iter: DEFAULT_MAX_ITER,
            score_clamp: false,
        }
    }
}

/// Contents of a `simulate` configuration file. Feature and row indices are 1-based.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub family: FamilyName,
    #[serde(default)]
    pub trials: Option<u32>,
    #[serde(default)]
    pub degree_law: Option<DegreeLaw>,
    #[serde(default)]
    pub theta_law: Option<ThetaLaw>,
    #[serde(default)]
    pub null_rows: Option<NullRows>,
    /// Sets row 1 to 0.5 in every class and row 2 to well-separated values.
    #[serde(default)]
    pub null_and_alternative: bool,
    #[serde(default)]
    pub overrides: Vec<OverrideEntry>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub regime: RegimeChoice,
    #[serde(default = "one")]
    pub null_feature: usize,
    #[serde(default = "two")]
    pub alt_feature: usize,
    #[serde(default)]
    pub clustering: ClusteringSection,
}

fn default_alpha() -> f64 {
    0.05
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn family(name: FamilyName, trials: Option<u32>) -> Result<ModelFamily, CliError> {
    match (name, trials) {
        (FamilyName::Binomial, Some(m)) => Ok(ModelFamily::binomial(m)?),
        (FamilyName::Binomial, None) => Err(CliError::Usage("binomial family needs \"trials\"".into())),
        (_, Some(_)) => Err(CliError::Usage("\"trials\" is only valid for the binomial family".into())),
        (FamilyName::Bernoulli, None) => Ok(ModelFamily::Bernoulli),
        (FamilyName::Poisson, None) => Ok(ModelFamily::Poisson),
    }
}

fn zero_based(index: usize, what: &str) -> Result<usize, CliError> {
    index
        .checked_sub(1)
        .ok_or_else(|| CliError::Usage(format!("{what} indices are 1-based; got 0")))
}

impl SimulateConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line(), e.to_string()))
    }

    pub fn to_experiment(&self) -> Result<ExperimentConfig, CliError> {
        let family = family(self.family, self.trials)?;
        let mut gen = GeneratorConfig::standard(self.n, self.j, self.k, family);
        if let Some(law) = self.degree_law {
            gen.degree_law = law;
        }
        if let Some(law) = &self.theta_law {
            gen.theta_law = law.clone();
        }
        gen.null_rows = self.null_rows;
        if self.null_and_alternative {
            gen = gen.with_null_and_alternative();
        }
        for o in &self.overrides {
            gen.overrides.push(RowOverride { row: zero_based(o.row, "override row")?, values: o.values.clone() });
        }
        let c = &self.clustering;
        let clustering = ClusteringOptions {
            iterations: c.iterations,
            normalization: c.normalization,
            method: c.method,
            restarts: c.restarts,
            max_iter: c.max_iter,
            seed: 0,
            score_guard: if c.score_clamp { ScoreGuard::Clamp } else { ScoreGuard::Error },
        };
        Ok(ExperimentConfig {
            generator: gen,
            clustering,
            alpha: self.alpha,
            regime: self.regime,
            null_feature: zero_based(self.null_feature, "feature")?,
            alt_feature: zero_based(self.alt_feature, "feature")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<SimulateConfig, serde_json::Error> {
        serde_json::from_str(s)
    }

    #[test]
    fn minimal_config() {
        let c = parse(r#"{"scenario":"type_i_power","n":20,"j":30,"k":2,"family":"bernoulli"}"#).unwrap();
        let e = c.to_experiment().unwrap();
        assert_eq!(e.null_feature, 0);
        assert_eq!(e.alt_feature, 1);
        assert_eq!(e.clustering.restarts, DEFAULT_RESTARTS);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(r#"{"scenario":"fdr","n":20,"j":30,"k":2,"family":"poisson","bogus":1}"#).is_err());
        assert!(parse(r#"{"scenario":"fdr","n":20,"j":30,"k":2,"family":"poisson","clustering":{"x":1}}"#).is_err());
    }

    #[test]
    fn overrides_are_one_based() {
        let c = parse(r#"{"scenario":"fdr","n":20,"j":30,"k":2,"family":"poisson","overrides":[{"row":3,"values":[1,2]}]}"#)
            .unwrap();
        assert_eq!(c.to_experiment().unwrap().generator.overrides[0].row, 2);
        let c = parse(r#"{"scenario":"fdr","n":20,"j":30,"k":2,"family":"poisson","overrides":[{"row":0,"values":[1,2]}]}"#)
            .unwrap();
        assert!(c.to_experiment().is_err());
    }

    #[test]
    fn binomial_needs_trials() {
        let c = parse(r#"{"scenario":"fdr","n":20,"j":30,"k":2,"family":"binomial"}"#).unwrap();
        assert!(c.to_experiment().is_err());
        let c = parse(r#"{"scenario":"fdr","n":20,"j":30,"k":2,"family":"binomial","trials":3}"#).unwrap();
        assert_eq!(c.to_experiment().unwrap().generator.family, ModelFamily::Binomial { trials: 3 });
    }
}

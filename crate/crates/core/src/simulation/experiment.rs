use std::time::Instant;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    hetero_clustering_matrix, misclustering_rate, rand_index, ClusteringOptions, NormalizationMode,
    SpectralMethod,
};
use crate::error::{Error, Result};
use crate::estimation::{aligned_max_error, fit_with_labels};
use crate::inference::{global_test, RegimeChoice};
use crate::model::FittedModel;
use crate::seed::derive_seed;
use crate::spectral::{plain_svd, projection_distance};

use super::generate::{generate, GeneratorConfig, Simulated};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Global test on one true-null feature and one alternative feature.
    TypeIPower,
    /// Benjamini-Hochberg over all features.
    Fdr,
    /// Every embedding x normalization combination.
    ClusterCompare,
    /// HeteroPCA against plain SVD under the configured normalization.
    SvdVsHeteroCompare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    pub clustering: ClusteringOptions,
    pub alpha: f64,
    pub regime: RegimeChoice,
    /// 0-based feature tested for size in `TypeIPower`.
    pub null_feature: usize,
    /// 0-based feature tested for power in `TypeIPower`.
    pub alt_feature: usize,
}

impl ExperimentConfig {
    pub fn new(generator: GeneratorConfig) -> Self {
        ExperimentConfig {
            generator,
            clustering: ClusteringOptions::default(),
            alpha: 0.05,
            regime: RegimeChoice::Auto,
            null_feature: 0,
            alt_feature: 1,
        }
    }

    fn validate(&self, scenario: Scenario) -> Result<()> {
        self.generator.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if scenario == Scenario::TypeIPower
            && (self.null_feature >= self.generator.j || self.alt_feature >= self.generator.j)
        {
            return Err(Error::Config("tested features must be < J".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: SpectralMethod,
    pub normalization: NormalizationMode,
    pub error: Option<String>,
    pub misclustering: Option<f64>,
    pub rand_index: Option<f64>,
    pub theta_max_error: Option<f64>,
    /// `||U U^T - U_hat U_hat^T||_F` against the mean matrix's left singular subspace.
    pub subspace_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDecision {
    pub feature: usize,
    pub stat: f64,
    pub threshold: f64,
    pub pvalue: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    /// `None` when the feature was not testable.
    pub null: Option<FeatureDecision>,
    pub alt: Option<FeatureDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrRecord {
    pub tested: usize,
    pub null_tested: usize,
    pub false_discoveries: usize,
    pub true_discoveries: usize,
    pub fdp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub clamped: usize,
    pub methods: Vec<MethodRecord>,
    pub inference: Option<InferenceRecord>,
    pub fdr: Option<FdrRecord>,
    #[serde(skip)]
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: SpectralMethod,
    pub normalization: NormalizationMode,
    pub runs: usize,
    pub mean_misclustering: Option<f64>,
    pub mean_rand_index: Option<f64>,
    pub mean_theta_max_error: Option<f64>,
    pub mean_subspace_error: Option<f64>,
    pub exact_recovery_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub completed: usize,
    pub failed: usize,
    pub methods: Vec<MethodSummary>,
    pub type_i_rate: Option<f64>,
    pub power: Option<f64>,
    pub mean_false_discoveries: Option<f64>,
    pub mean_true_discoveries: Option<f64>,
    pub mean_fdp: Option<f64>,
    /// Mean over replicates of false discoveries per tested null feature.
    pub fdr_type_i_rate: Option<f64>,
    pub clamped_total: usize,
}

/// Per-replicate records and their aggregates. Runtimes are kept out of the
/// serialized form so reports are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub replicates: usize,
    pub base_seed: u64,
    pub config: ExperimentConfig,
    pub aggregates: Aggregates,
    pub records: Vec<ReplicateRecord>,
    #[serde(skip)]
    pub runtime_secs: f64,
}

fn method_grid(scenario: Scenario, opts: &ClusteringOptions) -> Vec<(SpectralMethod, NormalizationMode)> {
    match scenario {
        Scenario::TypeIPower | Scenario::Fdr => vec![(opts.method, opts.normalization)],
        Scenario::SvdVsHeteroCompare => vec![
            (SpectralMethod::HeteroPca, opts.normalization),
            (SpectralMethod::PlainSvd, opts.normalization),
        ],
        Scenario::ClusterCompare => {
            let mut grid = Vec::new();
            for m in [SpectralMethod::HeteroPca, SpectralMethod::PlainSvd] {
                for n in [NormalizationMode::L2, NormalizationMode::Score, NormalizationMode::None] {
                    grid.push((m, n));
                }
            }
            grid
        }
    }
}

struct MethodRun {
    record: MethodRecord,
    model: Option<FittedModel>,
}

fn run_method(
    sim: &Simulated,
    data: &DMatrix<f64>,
    true_u: Option<&DMatrix<f64>>,
    opts: &ClusteringOptions,
) -> Result<MethodRun> {
    let k = sim.truth.k;
    let (assignment, embedding) = hetero_clustering_matrix(data, k, opts)?;
    let labels = &assignment.labels;
    let model = fit_with_labels(data, sim.obs.family(), &embedding, labels, k)?;
    let record = MethodRecord {
        method: opts.method,
        normalization: opts.normalization,
        error: None,
        misclustering: Some(misclustering_rate(&sim.truth.labels, labels)?),
        rand_index: Some(rand_index(&sim.truth.labels, labels)?),
        theta_max_error: Some(aligned_max_error(&model.theta_hat, &sim.truth.theta, &sim.truth.labels, labels)?),
        subspace_error: true_u.map(|u| projection_distance(u, &embedding.u)),
    };
    Ok(MethodRun { record, model: Some(model) })
}

fn decision(report: &crate::inference::TestReport) -> Option<FeatureDecision> {
    let feature = *report.feature_ids.first()?;
    Some(FeatureDecision {
        feature,
        stat: report.global_stat,
        threshold: report.threshold,
        pvalue: report.global_pvalue,
        reject: report.reject,
    })
}

fn single_feature(model: &FittedModel, feature: usize, cfg: &ExperimentConfig) -> Result<Option<FeatureDecision>> {
    match global_test(&model.theta_hat, &model.sigma2_hat, &[feature], cfg.alpha, cfg.regime) {
        Ok(r) => Ok(decision(&r)),
        Err(Error::NoTestableFeatures) => Ok(None),
        Err(e) => Err(e),
    }
}

fn fdr_record(model: &FittedModel, sim: &Simulated, cfg: &ExperimentConfig) -> Result<FdrRecord> {
    let theta = &sim.truth.theta;
    let is_null = |j: usize| theta.row(j).iter().all(|&v| v == theta[(j, 0)]);
    let features: Vec<usize> = (0..theta.nrows()).collect();
    let report = global_test(&model.theta_hat, &model.sigma2_hat, &features, cfg.alpha, cfg.regime)?;
    let false_discoveries = report.bh_rejections.iter().filter(|&&j| is_null(j)).count();
    let discoveries = report.bh_rejections.len();
    Ok(FdrRecord {
        tested: report.feature_ids.len(),
        null_tested: report.feature_ids.iter().filter(|&&j| is_null(j)).count(),
        false_discoveries,
        true_discoveries: discoveries - false_discoveries,
        fdp: false_discoveries as f64 / discoveries.max(1) as f64,
    })
}

fn run_replicate(scenario: Scenario, cfg: &ExperimentConfig, replicate: usize, seed: u64) -> ReplicateRecord {
    let start = Instant::now();
    let mut record = ReplicateRecord {
        replicate,
        seed,
        error: None,
        clamped: 0,
        methods: Vec::new(),
        inference: None,
        fdr: None,
        runtime_secs: 0.0,
    };
    if let Err(e) = fill_replicate(scenario, cfg, seed, &mut record) {
        warn!("replicate {replicate} failed: {e}");
        record.error = Some(e.to_string());
    }
    record.runtime_secs = start.elapsed().as_secs_f64();
    record
}

fn fill_replicate(scenario: Scenario, cfg: &ExperimentConfig, seed: u64, record: &mut ReplicateRecord) -> Result<()> {
    let mut gen = cfg.generator.clone();
    gen.seed = derive_seed(seed, 0);
    let sim = generate(&gen)?;
    record.clamped = sim.clamped;
    let data = sim.obs.to_matrix();
    let true_u = match scenario {
        Scenario::ClusterCompare | Scenario::SvdVsHeteroCompare => {
            Some(plain_svd(&sim.truth.mean_matrix(), sim.truth.k)?.u)
        }
        _ => None,
    };
    let mut primary = None;
    for (method, normalization) in method_grid(scenario, &cfg.clustering) {
        let opts = ClusteringOptions { method, normalization, seed: derive_seed(seed, 1), ..cfg.clustering };
        match run_method(&sim, &data, true_u.as_ref(), &opts) {
            Ok(run) => {
                record.methods.push(run.record);
                if primary.is_none() {
                    primary = run.model;
                }
            }
            Err(e) if matches!(scenario, Scenario::ClusterCompare | Scenario::SvdVsHeteroCompare) => {
                record.methods.push(MethodRecord {
                    method,
                    normalization,
                    error: Some(e.to_string()),
                    misclustering: None,
                    rand_index: None,
                    theta_max_error: None,
                    subspace_error: None,
                });
            }
            Err(e) => return Err(e),
        }
    }
    match scenario {
        Scenario::TypeIPower => {
            let model = primary.as_ref().ok_or_else(|| Error::Convergence("no fitted model".into()))?;
            record.inference = Some(InferenceRecord {
                null: single_feature(model, cfg.null_feature, cfg)?,
                alt: single_feature(model, cfg.alt_feature, cfg)?,
            });
        }
        Scenario::Fdr => {
            let model = primary.as_ref().ok_or_else(|| Error::Convergence("no fitted model".into()))?;
            record.fdr = Some(fdr_record(model, &sim, cfg)?);
        }
        _ => {}
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates computed from the records alone.
pub fn aggregate(records: &[ReplicateRecord]) -> Aggregates {
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let mut methods: Vec<MethodSummary> = Vec::new();
    if let Some(first) = ok.first() {
        for (idx, m) in first.methods.iter().enumerate() {
            let runs: Vec<&MethodRecord> = ok
                .iter()
                .filter_map(|r| r.methods.get(idx))
                .filter(|r| r.error.is_none())
                .collect();
            methods.push(MethodSummary {
                method: m.method,
                normalization: m.normalization,
                runs: runs.len(),
                mean_misclustering: mean(runs.iter().filter_map(|r| r.misclustering)),
                mean_rand_index: mean(runs.iter().filter_map(|r| r.rand_index)),
                mean_theta_max_error: mean(runs.iter().filter_map(|r| r.theta_max_error)),
                mean_subspace_error: mean(runs.iter().filter_map(|r| r.subspace_error)),
                exact_recovery_rate: mean(
                    runs.iter().filter_map(|r| r.misclustering).map(|h| if h == 0.0 { 1.0 } else { 0.0 }),
                ),
            });
        }
    }
    let inference: Vec<&InferenceRecord> = ok.iter().filter_map(|r| r.inference.as_ref()).collect();
    let rate = |pick: fn(&InferenceRecord) -> &Option<FeatureDecision>| {
        mean(inference.iter().map(|r| if pick(r).as_ref().is_some_and(|d| d.reject) { 1.0 } else { 0.0 }))
    };
    let fdr: Vec<&FdrRecord> = ok.iter().filter_map(|r| r.fdr.as_ref()).collect();
    Aggregates {
        completed: ok.len(),
        failed: records.len() - ok.len(),
        methods,
        type_i_rate: rate(|r| &r.null),
        power: rate(|r| &r.alt),
        mean_false_discoveries: mean(fdr.iter().map(|r| r.false_discoveries as f64)),
        mean_true_discoveries: mean(fdr.iter().map(|r| r.true_discoveries as f64)),
        mean_fdp: mean(fdr.iter().map(|r| r.fdp)),
        fdr_type_i_rate: mean(
            fdr.iter().filter(|r| r.null_tested > 0).map(|r| r.false_discoveries as f64 / r.null_tested as f64),
        ),
        clamped_total: records.iter().map(|r| r.clamped).sum(),
    }
}

/// Runs `replicates` independent generate, cluster, estimate and test
/// pipelines on `jobs` threads. Replicate `r` uses seed
/// `derive_seed(base_seed, r)`, so the report does not depend on `jobs`.
pub fn run_experiment(
    scenario: Scenario,
    config: &ExperimentConfig,
    replicates: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<ExperimentReport> {
    config.validate(scenario)?;
    if jobs == 0 {
        return Err(Error::InvalidArgument("jobs must be >= 1".into()));
    }
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let records: Vec<ReplicateRecord> = pool.install(|| {
        (0..replicates)
            .into_par_iter()
            .map(|r| run_replicate(scenario, config, r, derive_seed(base_seed, r as u64)))
            .collect()
    });
    Ok(ExperimentReport {
        scenario,
        replicates,
        base_seed,
        config: config.clone(),
        aggregates: aggregate(&records),
        records,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

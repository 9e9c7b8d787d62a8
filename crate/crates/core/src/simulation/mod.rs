//! Synthetic data under the degree-heterogeneous latent class model, a
//! joint-likelihood baseline and the Monte-Carlo experiment harness.

mod experiment;
mod generate;
mod jml;

pub use experiment::{
    aggregate, run_experiment, Aggregates, ExperimentConfig, ExperimentReport, FdrRecord, FeatureDecision,
    InferenceRecord, MethodRecord, MethodSummary, ReplicateRecord, Scenario,
};
pub use generate::{
    generate, rescale_degrees, DegreeLaw, GeneratorConfig, NullRows, RowOverride, Simulated, ThetaLaw,
};
pub use jml::{jml_fit, joint_loglik, JmlFit};

//! Spectral clustering and inference for degree-heterogeneous latent class
//! models with Bernoulli, Binomial and Poisson responses.

pub mod clustering;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod model;
pub mod seed;
pub mod simulation;
pub mod special;
pub mod spectral;

pub use clustering::{hetero_clustering, ClusterAssignment, ClusteringOptions, NormalizationMode, SpectralMethod};
pub use error::{Error, Result};
pub use estimation::{fit, Diagnostics};
pub use inference::{global_test, Regime, RegimeChoice, TestReport};
pub use model::{FittedModel, GroundTruth, ModelFamily, ObservationMatrix};
pub use spectral::SpectralEmbedding;

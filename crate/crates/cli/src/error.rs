use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}, line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: dhlcm::Error },
    #[error(transparent)]
    Core(#[from] dhlcm::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: usize, msg: String) -> Self {
        CliError::Parse { path: path.to_path_buf(), line, msg }
    }

    pub fn data(path: &Path, source: dhlcm::Error) -> Self {
        CliError::Data { path: path.to_path_buf(), source }
    }

    fn kind(&self) -> &'static str {
        let core = match self {
            CliError::Io { .. } => return "io",
            CliError::Parse { .. } => return "parse",
            CliError::Usage(_) => return "usage",
            CliError::Data { source, .. } | CliError::Core(source) => source,
        };
        match core {
            dhlcm::Error::Domain { .. } => "domain",
            dhlcm::Error::InvalidArgument(_) => "invalid_argument",
            dhlcm::Error::Shape(_) => "shape",
            dhlcm::Error::Convergence(_) => "convergence",
            dhlcm::Error::DegenerateRow { .. } => "degenerate_row",
            dhlcm::Error::EmptyCluster(_) => "empty_cluster",
            dhlcm::Error::NotTestable { .. } => "not_testable",
            dhlcm::Error::NoTestableFeatures => "no_testable_features",
            dhlcm::Error::RankDeficient { .. } => "rank_deficient",
            dhlcm::Error::Config(_) => "config",
            dhlcm::Error::Family { .. } => "family",
        }
    }

    /// One-line JSON record written to stderr before exiting with status 1.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: &'a str,
            message: String,
        }
        serde_json::to_string(&Record { error: self.kind(), message: self.to_string() })
            .unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.kind()))
    }
}

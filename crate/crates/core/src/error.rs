use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("state-action pair ({state}, {action}) is not admissible")]
    Inadmissible { state: usize, action: usize },

    #[error("sample set does not match the MDP: {0}")]
    SampleMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("wrong algorithm: step expected {expected}, state holds {found}")]
    WrongAlgorithm {
        expected: &'static str,
        found: &'static str,
    },

    #[error("AQL three-line and compact updates disagree by {diff:e} at k={k}")]
    FormMismatch { k: usize, diff: f64 },

    #[error("map parse error at line {line}: {msg}")]
    MapParse { line: usize, msg: String },

    #[error("DARE did not converge within {iterations} iterations (last change {last_change:e})")]
    DareNonConvergence { iterations: usize, last_change: f64 },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parameter vector diverged at step {step} (norm {norm:e})")]
    Divergence { step: usize, norm: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed trajectory CSV: {0}")]
    TrajectoryCsv(String),

    #[error("{context}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

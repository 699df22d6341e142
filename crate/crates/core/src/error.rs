use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no land in domain")]
    NoLand,

    #[error("point ({lon}, {lat}) lies outside the grid")]
    OutOfDomain { lon: f64, lat: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rank-deficient basis: column(s) {columns:?} are collinear with earlier columns")]
    RankDeficient { columns: Vec<usize> },

    #[error("covariance matrix is not positive definite (smallest eigenvalue ≈ {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("zero predictive variance at holdout point {index}")]
    ZeroVariance { index: usize },

    #[error("{path}: line {line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },

    #[error("site {site}: {unreached} of {total} design runs never reached the site")]
    TooManyUnreached {
        site: String,
        unreached: usize,
        total: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifacts: {0:?}")]
    MissingArtifacts(Vec<PathBuf>),

    #[error("stage `{stage}` failed (artifact {path}): {source}")]
    Stage {
        stage: String,
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

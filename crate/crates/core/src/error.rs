use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("no cluster has at least {min_cluster_size} events")]
    EmptySummary { min_cluster_size: usize },

    #[error("every pooled cluster was labelled noise; template is empty")]
    EmptyTemplate,

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("pair ({a}, {b}): {source}")]
    Pair {
        a: String,
        b: String,
        #[source]
        source: Box<Error>,
    },

    #[error("all {} runs failed; first error: {}", .0.len(), .0.first().map(|e| e.to_string()).unwrap_or_default())]
    AllRunsFailed(Vec<Error>),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("schema error (format version {version}): {message}")]
    Schema { version: u32, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotConverged { .. } => "not_converged",
            Error::EmptySummary { .. } => "empty_summary",
            Error::EmptyTemplate => "empty_template",
            Error::Configuration(_) => "configuration",
            Error::Pair { source, .. } => source.kind(),
            Error::AllRunsFailed(_) => "all_runs_failed",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        /// 1-based line in the input.
        line: usize,
        /// 1-based column (field index), when the error is cell-local.
        column: Option<usize>,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("empty input")]
    EmptyInput,

    #[error("duplicate point id {0:?}")]
    DuplicateId(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing label for {0}")]
    MissingLabel(String),

    #[error("graph has no edges")]
    NoEdges,

    #[error(
        "eigensolver did not converge{}: residual {residual:.3e} after {iterations} iterations",
        round.map(|r| format!(" in round {r}")).unwrap_or_default()
    )]
    Convergence {
        /// Extraction round, when failure happened inside the extraction loop.
        round: Option<usize>,
        iterations: usize,
        residual: f64,
        /// Best eigenvalue estimate at abort time.
        best_eigenvalue: f64,
        /// Best iterate at abort time.
        best_vector: Vec<f64>,
    },

    #[error("empty cluster row")]
    EmptyCluster,

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn invalid_parameter(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by malformed or out-of-range user input, as
    /// opposed to numeric failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Parse { .. }
                | Error::Format(_)
                | Error::DimensionMismatch { .. }
                | Error::EmptyInput
                | Error::DuplicateId(_)
                | Error::InvalidInput(_)
                | Error::InvalidParameter(_)
                | Error::MissingLabel(_)
        )
    }
}

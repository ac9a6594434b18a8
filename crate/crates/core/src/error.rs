use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    /// Bad values in an otherwise well-formed file. Rows and columns are 1-based.
    #[error("data error at row {row}, column {col}: {msg}")]
    DataAt { row: usize, col: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("column {0} has zero norm and cannot be standardized")]
    DegenerateColumn(usize),

    #[error("coordinate {0} has non-positive curvature")]
    DegenerateCoordinate(usize),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("resample error: {0}")]
    Resample(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("cross-validation plan error: {0}")]
    Plan(String),

    #[error("synthetic data spec error: {0}")]
    Spec(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the contents or shape of input data, as
    /// opposed to configuration or numerical failures.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_)
                | Error::DataAt { .. }
                | Error::Data(_)
                | Error::Shape(_)
                | Error::DegenerateColumn(_)
                | Error::Label(_)
                | Error::Io { .. }
        )
    }
}

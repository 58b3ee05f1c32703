use std::path::PathBuf;

/// Errors produced by the `hsacc` library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two operands disagree on a dimension.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite {term} loss")]
    Divergence {
        epoch: usize,
        batch: usize,
        term: &'static str,
    },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("row-count mismatch: view {view} has {actual} rows, expected {expected}")]
    RowCountMismatch {
        view: usize,
        expected: usize,
        actual: usize,
    },

    #[error("non-numeric cell at view {view}, row {row}, col {col}: {cell:?}")]
    NonNumericCell {
        view: usize,
        row: usize,
        col: usize,
        cell: String,
    },

    #[error("malformed {what} at line {line}: {message}")]
    Malformed {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(
    context: &'static str,
    expected: impl std::fmt::Debug,
    actual: impl std::fmt::Debug,
) -> Error {
    Error::Shape {
        context,
        expected: format!("{expected:?}"),
        actual: format!("{actual:?}"),
    }
}

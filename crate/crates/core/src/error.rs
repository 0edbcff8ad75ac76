use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Index fields are zero-based positions in descending eigenvalue order or in
/// the natural row/column order of the matrix.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric: relative asymmetry {asymmetry:.3e} exceeds 1e-12")]
    Asymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite: pivot {index} is {pivot:.6e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("symmetric eigen-solver did not converge for {what}")]
    EigenNonConvergence { what: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("eigenvalues {first} and {second} tie within tolerance ({value:.6e})")]
    EigenvalueTie { first: usize, second: usize, value: f64 },

    #[error("eigenvalues are not strictly descending at index {index}")]
    NotDescending { index: usize },

    #[error("shrinkage denominator at index {index} is {denominator:.6e}; sample eigenvalues are too clustered")]
    ShrinkageSingularity { index: usize, denominator: f64 },

    #[error("quantile map denominator {denominator:.6e} is not positive")]
    QuantileSingularity { denominator: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "{failed} of {total} replicates failed (limit 1%); first failure at replicate {first_index}: {first_message}"
    )]
    TooManyFailures {
        failed: usize,
        total: usize,
        first_index: usize,
        first_message: String,
    },

    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: usize, expected: usize, found: usize },

    #[error("cannot parse cell at row {row}, column {col}: {value:?}")]
    BadCell { row: usize, col: usize, value: String },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

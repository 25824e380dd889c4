use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quadrature order {k}: must lie in 1..={max}")]
    InvalidOrder { k: usize, max: usize },

    #[error(
        "product grid with {k} points in {s} dimensions exceeds the {cap} point capacity; \
         use a smaller k (sparse rules are not supported)"
    )]
    GridCapacity { s: usize, k: usize, cap: usize },

    #[error("cholesky factor has non-positive diagonal entry {value} at index {index}")]
    Factorization { index: usize, value: f64 },

    #[error("matrix is not positive definite: pivot {pivot} failed with jitter up to {jitter:e}")]
    NotPositiveDefinite { pivot: usize, jitter: f64 },

    #[error("matrix is not symmetric: entries ({i},{j}) differ by {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },

    #[error("every log value is -inf; the posterior is degenerate")]
    DegeneratePosterior,

    #[error("objective is not finite at the starting point")]
    InvalidStart,

    #[error("function value {value} is not finite at {point:?}")]
    NonFiniteEvaluation { point: Vec<f64>, value: f64 },

    #[error(
        "inner optimisation did not converge at theta = {theta:?} after {iterations} iterations \
         (gradient inf-norm {grad_norm:e})"
    )]
    InnerNonConvergence {
        theta: Vec<f64>,
        iterations: usize,
        grad_norm: f64,
    },

    #[error(
        "hyperparameter optimisation did not converge after {iterations} iterations \
         (gradient inf-norm {grad_norm:e})"
    )]
    OuterNonConvergence { iterations: usize, grad_norm: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("likelihood domain violation: {0}")]
    Domain(String),

    #[error("oracle needs joint dimension <= {cap}, model has {dim}")]
    OracleDimension { dim: usize, cap: usize },

    #[error("oracle grid has {points} points, cap is {cap}")]
    OracleGrid { points: usize, cap: usize },

    #[error("log joint is non-finite on {bad} of {total} oracle grid points")]
    OracleNonFinite { bad: usize, total: usize },

    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("cannot parse `{value}` at row {row}, column {column}: {reason}")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
        reason: String,
    },

    #[error("row {row} has {got} fields, expected {expected}")]
    RowLength {
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("serialization: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short, stable class name used in machine-readable error lines.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidOrder { .. } | Error::InvalidArgument(_) | Error::Dimension(_) => {
                "invalid-argument"
            }
            Error::GridCapacity { .. } | Error::OracleDimension { .. } | Error::OracleGrid { .. } => {
                "capacity"
            }
            Error::Factorization { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::NotSymmetric { .. } => "factorization",
            Error::DegeneratePosterior => "degenerate-posterior",
            Error::InvalidStart | Error::NonFiniteEvaluation { .. } | Error::OracleNonFinite { .. } => {
                "evaluation"
            }
            Error::InnerNonConvergence { .. } | Error::OuterNonConvergence { .. } => "convergence",
            Error::InvalidModel(_) | Error::Domain(_) => "model",
            Error::InsufficientSamples { .. } => "samples",
            Error::MissingColumn(_) | Error::ParseCell { .. } | Error::RowLength { .. } => "data",
            Error::Serialization(_) => "serialization",
            Error::Io(_) => "io",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

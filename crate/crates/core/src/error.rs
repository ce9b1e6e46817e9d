use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameters outside the family's admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an operation's precondition (wrong supply mode, bad grid, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Work would exceed a configured memory or enumeration budget.
    #[error("resource limit: {0}")]
    Resource(String),

    #[error("quadrature did not reach tolerance {tol:e} (estimated error {estimate:e}) after {subdivisions} subdivisions")]
    Convergence {
        tol: f64,
        estimate: f64,
        subdivisions: usize,
    },

    #[error("no closed form covers this combination: {what}; nearest covered result: {nearest}")]
    Unsupported { what: String, nearest: String },

    #[error("unknown figure preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

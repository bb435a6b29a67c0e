use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid torus: {0}")]
    InvalidTorus(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    /// The exponential moment diverges at the named mode.
    #[error("exponential moment diverges: 1 - 2A/(m^2 + symbol) = {margin:.3e} <= 0 at mode k = ({k0}, {k1})")]
    Divergence { k0: i64, k1: i64, margin: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("requested tolerance {requested:.3e} is below attainable precision {attainable:.3e}")]
    Precision { requested: f64, attainable: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error(
        "quadrature nodes too sparse: refined and coarse estimates differ by {sigmas:.2} sigma"
    )]
    RefinementRequired { sigmas: f64 },
}

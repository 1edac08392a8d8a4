use thiserror::Error;

use crate::gaussian::VarId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("not convertible to moment form: precision matrix is singular or indefinite (rcond {rcond:.3e})")]
    NotConvertible { rcond: f64 },

    #[error("improper marginal: precision block over {vars:?} is not invertible (rcond {rcond:.3e})")]
    ImproperMarginal { vars: Vec<VarId>, rcond: f64 },

    #[error("improper marginal in discrete configuration {config}: {source}")]
    ImproperEntry {
        config: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("variable {0:?} is not in the potential's scope")]
    NotInScope(VarId),

    #[error("scope mismatch: {0}")]
    Scope(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("support violation: numerator has positive support where the denominator has none (configuration {config})")]
    SupportViolation { config: usize },

    #[error("zero support: every configuration has zero probability")]
    ZeroSupport,

    #[error("variational parameter alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("network error: {0}")]
    Network(String),

    #[error("evidence error: {0}")]
    Evidence(String),

    #[error("oracle refused: {0}")]
    OracleScale(String),

    #[error("inference failed at {context}: {source}")]
    Inference {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_context(self, context: impl Into<String>) -> Error {
        Error::Inference {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the solver, the oracles and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("time ordering violated: s = {s} > t = {t}")]
    TimeOrder { s: f64, t: f64 },

    #[error("evaluation time t = {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("Picard depth n = {n} exceeds depth guard {guard}")]
    DepthGuard { n: u32, guard: u32 },

    #[error("64-bit counter overflow while {context}")]
    Overflow { context: String },

    #[error("feynman-kac oracle requires a nonlinearity independent of u (got {name})")]
    SolutionDependentSource { name: String },

    #[error("{method} did not converge: {detail} (best value {best})")]
    NonConvergence { method: &'static str, best: f64, detail: String },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("reference computation failed: {0}")]
    Reference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite { context: context.into() }
    }
}

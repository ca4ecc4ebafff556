use num_complex::Complex64;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument {value} lies outside the working range [-{limit}, {limit}]")]
    Range { value: f64, limit: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The adaptive integrator could not continue; `last_state` is the last accepted state.
    #[error("integration stalled at t = {t:.6e} (reduced units): {reason}")]
    Stalled {
        t: f64,
        last_state: Vec<Complex64>,
        reason: String,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for errors that stem from bad inputs rather than numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Range { .. } | Error::Precondition(_)
        )
    }
}

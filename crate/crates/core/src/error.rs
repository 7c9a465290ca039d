use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension for {what}: expected {expected}, got {got}")]
    InvalidDimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("point is not in the interior of the cone")]
    NotInterior,

    #[error("callback `{callback}` returned a non-finite value")]
    EvaluationFailure { callback: &'static str },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("inertia correction failed: primal regularization {eps_p:e} exceeded its limit")]
    InertiaCorrectionFailure { eps_p: f64 },

    #[error("line search failed: step size fell below {min_step:e}")]
    LineSearchFailure { min_step: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::InvalidDimension {
            what: what.into(),
            expected,
            got,
        }
    }
}

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dim(what, expected, got))
    }
}

use thiserror::Error;

/// Errors raised by model construction, evaluation and recovery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("scenario {scenario} is infeasible: every bundle is excluded")]
    Infeasible { scenario: usize },

    #[error("non-finite demand evaluated at covariate point {node:?}")]
    NonFinite { node: Vec<f64> },

    #[error("relevance failure: {0}")]
    Relevance(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no nonzero inductive anchor available at order {order}")]
    Anchor { order: usize },

    #[error("all probed derivatives at order {order} are below the relevance threshold")]
    Degenerate { order: usize },

    #[error("absolute continuity precondition violated: {0}")]
    AbsoluteContinuity(String),

    #[error("weighting error: {0}")]
    Weighting(String),
}

impl Error {
    /// True for failures that stem from the data rather than from a malformed setup.
    pub fn is_identification_failure(&self) -> bool {
        matches!(
            self,
            Error::Relevance(_)
                | Error::Precondition(_)
                | Error::Anchor { .. }
                | Error::Degenerate { .. }
                | Error::AbsoluteContinuity(_)
                | Error::Weighting(_)
                | Error::Infeasible { .. }
                | Error::NonFinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

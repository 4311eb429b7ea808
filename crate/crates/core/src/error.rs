use thiserror::Error;

/// Errors raised for invalid inputs and configurations.
///
/// Data-dependent degeneracy of the estimator is *not* an error; it is
/// reported through [`crate::OmegaOutcome::Undefined`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid design matrix: {0}")]
    InvalidDesign(String),

    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("augmentation impossible: adjusted design needs {k_bar} columns but n = {n}")]
    AugmentationImpossible { k_bar: usize, n: usize },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix that must be positive definite failed to factor.
    #[error("{role} is not positive definite{}", at_index(*k))]
    Singular { role: String, k: Option<usize> },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("time index {k} outside horizon 0..={horizon}")]
    IndexOutOfRange { k: usize, horizon: usize },

    #[error("{op} requires the {expected} information pattern")]
    Pattern {
        op: &'static str,
        expected: &'static str,
    },

    #[error("transmission at k={k} requires a payload")]
    MissingPayload { k: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("incomplete trajectory: {0}")]
    IncompleteTrajectory(String),

    #[error("operation supports only scalar systems, got state dimension {n}")]
    UnsupportedDimension { n: usize },
}

fn at_index(k: Option<usize>) -> String {
    match k {
        Some(k) => format!(" at k={k}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn singular(role: impl Into<String>, k: Option<usize>) -> Self {
        Error::Singular {
            role: role.into(),
            k,
        }
    }

    /// Attach a time index to a singularity error raised by a helper that
    /// did not know it.
    pub(crate) fn at(self, k: usize) -> Self {
        match self {
            Error::Singular { role, k: None } => Error::Singular { role, k: Some(k) },
            other => other,
        }
    }
}

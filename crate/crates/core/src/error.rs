use thiserror::Error;

/// Which density-matrix axiom a candidate failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityViolation {
    NotHermitian,
    NegativeEigenvalue,
    WrongTrace,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("matrix is not Hermitian (max |M - M^H| = {0:.3e})")]
    NotHermitian(f64),

    #[error("not a density matrix: {violation:?} ({detail})")]
    InvalidDensity {
        violation: DensityViolation,
        detail: String,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset is missing setting `{0}`")]
    MissingSetting(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("problem too large: {0}")]
    Resource(String),

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::InvalidDensity { .. } | Error::NotHermitian(_) | Error::Sampler(_) => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input matrix is not symmetric (relative asymmetry {0:.3e})")]
    AsymmetricInput(f64),
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("exponent {0:.3e} overflows f64")]
    Overflow(f64),
    #[error("trigonometric features require a phase for every draw")]
    MissingPhase,
    #[error("phi = {0:.3e} is negative; moment statistics are inconsistent")]
    NegativePhi(f64),
    #[error("moment matrix is singular (min eigenvalue {min_eig:.3e}, threshold {threshold:.3e})")]
    SingularMoments { min_eig: f64, threshold: f64 },
    #[error("singular value {value:.3e} too small relative to {max:.3e}")]
    DegenerateSigma { value: f64, max: f64 },
    #[error("matrix has eigenvalue {0:.3e} below the PSD tolerance")]
    NonPsd(f64),
    #[error("attention normalizer vanished at row {0}")]
    DegenerateDenominator(usize),
    #[error("transform is singular")]
    SingularTransform,
    #[error("family {0} has no analytic second moment")]
    UnsupportedFamily(&'static str),
    #[error("trigonometric features cannot be used where positivity is required")]
    TrigUnsupported,
    #[error("invalid QMC correlation: {0}")]
    InvalidCorrelation(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at row {row}, column {column:?}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("label column {0:?} not found")]
    MissingLabelColumn(String),
    #[error("dataset has {0} rows; at least {1} required")]
    TooSmall(usize, usize),
    #[error("io error: {0}")]
    Io(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for numeric failures (overflow, singular or degenerate inputs).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self.root(),
            Error::Overflow(_)
                | Error::NoConvergence(_)
                | Error::NegativePhi(_)
                | Error::SingularMoments { .. }
                | Error::DegenerateSigma { .. }
                | Error::NonPsd(_)
                | Error::SingularTransform
                | Error::DegenerateDenominator(_)
                | Error::AsymmetricInput(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Largest exponent whose `exp` is finite.
pub const MAX_EXPONENT: f64 = 709.0;

/// `exp(x)`, or `Overflow` when the result would not be finite.
pub fn checked_exp(x: f64) -> Result<f64> {
    if x > MAX_EXPONENT || x.is_nan() {
        Err(Error::Overflow(x))
    } else {
        Ok(x.exp())
    }
}

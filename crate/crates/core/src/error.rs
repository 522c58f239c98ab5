use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("assembly tolerance not met: estimated error {estimate:.3e} exceeds {tolerance:.3e} ({context})")]
    AssemblyTolerance {
        estimate: f64,
        tolerance: f64,
        context: String,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("mean-zero violation: |mean| = {mean:.3e} against norm {norm:.3e}")]
    MeanZeroViolation { mean: f64, norm: f64 },

    #[error("s-grid truncation: tail mass {tail:.3e} exceeds {tolerance:.3e}; try s_max >= {suggested_s_max}")]
    Truncation {
        tail: f64,
        tolerance: f64,
        suggested_s_max: f64,
    },

    #[error("unsupported reduction: {0}")]
    UnsupportedReduction(String),

    #[error("time step {dt} is not an integer multiple of the s-grid spacing {ds}")]
    Alignment { dt: f64, ds: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant breach: {0}")]
    InvariantBreach(String),

    #[error(
        "Newton iteration did not converge in {iterations} iterations (last residual {last:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        residuals: Vec<f64>,
        last: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Process exit status for an error: 2 for bad input, 3 for numerical
/// failure, 4 for a violated invariant, 1 for I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Parse(_)
        | Error::Alignment { .. }
        | Error::Parameter(_)
        | Error::InvalidDomain(_)
        | Error::Truncation { .. }
        | Error::UnsupportedReduction(_) => 2,
        Error::NumericalFailure(_)
        | Error::NoConvergence { .. }
        | Error::AssemblyTolerance { .. } => 3,
        Error::InvariantBreach(_) | Error::MeanZeroViolation { .. } => 4,
        Error::Io(_) => 1,
    }
}

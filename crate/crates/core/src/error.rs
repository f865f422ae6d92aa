use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors are split into input/schema problems and numerical failures so the
/// command-line front end can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite value while evaluating {0}")]
    NonFinite(String),
    #[error("gap collapse: lambda = {lambda:.3e} below tolerance {tol:.1e}")]
    GapCollapse { lambda: f64, tol: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("signature error: {0}")]
    Signature(String),
    #[error("step-size bound violated: dt = {dt:.3e} exceeds {bound:.3e} ({rule})")]
    StepSize { dt: f64, bound: f64, rule: String },
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("validity window exceeded: t = {t} > T_valid = {t_valid}")]
    Validity { t: f64, t_valid: f64 },
    #[error("budget error: {0}")]
    Budget(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for failures caused by the numerical process rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Parse(_) | Error::Invalid(_) | Error::Io(_))
    }
}

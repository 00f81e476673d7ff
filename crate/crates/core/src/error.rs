use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown Hamiltonian class `{0}`")]
    UnknownClass(String),
    #[error("spectrum bounds [{lo}, {hi}] do not contain the spectrum [{min}, {max}]")]
    BoundsViolated { lo: f64, hi: f64, min: f64, max: f64 },
    #[error("matrix is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),
    #[error("target probability {target} is unreachable (ground overlap {floor})")]
    Unreachable { target: f64, floor: f64 },
    #[error("function exceeds unit modulus: max {max:.6} at x = {at:.6}")]
    Normalization { max: f64, at: f64 },
    #[error("spectral factorization residual {0:.3e} too large; rescale the target by 1/(1+eps)")]
    Factorization(f64),
    #[error("degenerate layer at step {step}: residual {residual:.3e}")]
    Degenerate { step: usize, residual: f64 },
    #[error("certification failed: achieved error {achieved:.3e} > tolerance {tol:.3e}")]
    Certification { achieved: f64, tol: f64 },
    #[error("pulse fit failed: achieved error {achieved:.3e} > tolerance {tol:.3e}")]
    PulseFit { achieved: f64, tol: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("zero-probability branch")]
    ZeroProbability,
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error("no crossing found for beta <= {beta_max}")]
    NoCrossing { beta_max: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input value {0}")]
    NonFinite(f64),

    #[error("insufficient data: need at least {needed} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed input at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("duplicate observation for user {user} in period {period}")]
    DuplicateCell { user: String, period: u8 },

    #[error("denominator mean is zero; the ratio is undefined")]
    ZeroDenominator,

    #[error("Fieller interval is unbounded (g = {g:.6} >= 1)")]
    FiellerUnbounded { g: f64 },

    #[error("Fieller discriminant is negative; no real interval")]
    FiellerNoRealRoots,

    #[error("singular covariance matrix: {0}")]
    SingularCovariance(&'static str),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{0}")]
    Unsupported(&'static str),
}

impl Error {
    /// True for errors caused by malformed or out-of-domain input, as opposed
    /// to a statistically degenerate (but well-formed) sample.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::InvalidParameter(_)
                | Error::Parse { .. }
                | Error::DuplicateCell { .. }
                | Error::LengthMismatch { .. }
                | Error::Unsupported(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(x))
    }
}

/// Accepts `alpha` in `(0, 1]`; `alpha = 1` yields zero-width intervals.
pub fn check_alpha(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(alpha)
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )))
    }
}

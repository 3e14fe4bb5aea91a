use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside schedule range [{min}, {max}]")]
    OutOfRange { t: f64, min: f64, max: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sigma_t is zero at t = {0}; no division possible")]
    ZeroSigma(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dense operation requested at d = {dim}, cap is {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("target is not log-concave at this point (min eigenvalue of -H is {min_eig})")]
    NotLogConcave { min_eig: f64 },

    #[error("damping too small: preconditioner is not positive definite, need lambda > {required}")]
    DampingTooSmall { required: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("divergence is infinite: {0}")]
    InfiniteDivergence(&'static str),

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

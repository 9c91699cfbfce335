use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {height}x{width} is not a power of two >= 2")]
    Sizing { height: usize, width: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("timestep {t} is not usable here: {reason}")]
    Timestep { t: usize, reason: &'static str },

    #[error("series did not converge in {what}: {terms} terms, residual mass {residual:e}")]
    Convergence {
        what: &'static str,
        terms: usize,
        residual: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite loss at timestep {t}, iteration {iter}: l_sem={l_sem}, l_wm={l_wm}")]
    NonFiniteLoss {
        t: usize,
        iter: usize,
        l_sem: f64,
        l_wm: f64,
    },

    #[error("key file checksum mismatch: {0}")]
    Checksum(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl std::fmt::Debug, got: impl std::fmt::Debug) -> Self {
        Error::Shape {
            expected: format!("{expected:?}"),
            got: format!("{got:?}"),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

use thiserror::Error;

/// Errors raised anywhere in the model, synthesis, estimation and fitting
/// pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    /// A response function was evaluated exactly on an undamped resonance.
    #[error("singular evaluation at bin {bin} (omega = {omega} rad/s): undamped resonance")]
    Singular { bin: usize, omega: f64 },

    /// The virtual-rigidity radicand `1 - (G/2W) sin(2 dtheta)` is not positive.
    #[error("virtual-rigidity radicand {radicand} is not positive")]
    Domain { radicand: f64 },

    #[error("division by zero idler spectrum at bin {bin}")]
    ZeroIdler { bin: usize },

    #[error("record too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("duplicate theta_s value {0} deg")]
    DuplicateAngle(f64),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

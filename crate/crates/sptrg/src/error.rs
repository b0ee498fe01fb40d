use thiserror::Error;

/// Errors surfaced by the library.
///
/// The three categories map onto the CLI exit codes: configuration/structural
/// misuse, resource-cap violations, and numerical assertion failures detected
/// at construction time.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("size cap exceeded: state would need {needed} amplitudes (cap {cap})")]
    SizeCap { needed: u128, cap: u64 },

    #[error("numerical assertion failed: {0}")]
    Numerical(String),

    #[error("eigensolver did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn structural(msg: impl Into<String>) -> Self {
        CoreError::Structural(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        CoreError::Domain(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        CoreError::Numerical(msg.into())
    }
}

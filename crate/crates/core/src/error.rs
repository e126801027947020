use alloc::string::String;

/// Errors raised by the estimators and the simulator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("loss is not unimodal on the scan grid ({sign_changes} slope sign changes)")]
    MultiModal { sign_changes: usize },
    #[error("degenerate jump law: loss has no interior minimum, minimiser pinned at {pinned_at}")]
    DegenerateLaw { pinned_at: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("sample path carries no latent truth")]
    MissingLatent,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An input violated a precondition (non-finite number, dimension
    /// mismatch, bad parameter).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A register dimension outside the supported set {2, 4, 8}.
    #[error("unsupported dimension {0}: supported dimensions are 2, 4 and 8")]
    UnsupportedDimension(usize),

    /// Consecutive projections of a product history are orthogonal, so the
    /// history chain has zero norm and no normalization exists.
    #[error("null history: consecutive states are orthogonal (|overlap| = {overlap:.3e})")]
    NullHistory { overlap: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

use alloc::string::String;
use core::fmt;

/// Crate-wide error type.  Variants carry enough context to point the caller
/// at the offending input; they are not meant to be matched exhaustively.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A swimmer design violates its declared parameter ranges.
    InvalidDesign(String),
    /// A mesh is degenerate: zero-area elements, non-manifold edges,
    /// disconnected components, or an unusable resolution.
    DegenerateMesh(String),
    /// Point count exceeds the dense-mobility cap.
    TooManyPoints { points: usize, cap: usize },
    /// A physical parameter is out of range (non-positive modulus,
    /// zero field direction, magnetic number without a magnetic segment, ...).
    InvalidParameter(String),
    /// A linear or nonlinear solve failed to converge.
    SolveFailed(String),
    /// Time integration hit the substep floor without meeting the
    /// displacement bound.
    NotConverged(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidDesign(msg) => write!(f, "invalid design: {msg}"),
            Error::DegenerateMesh(msg) => write!(f, "degenerate mesh: {msg}"),
            Error::TooManyPoints { points, cap } => {
                write!(f, "{points} collocation points exceed the cap of {cap}")
            }
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::SolveFailed(msg) => write!(f, "solve failed: {msg}"),
            Error::NotConverged(msg) => write!(f, "not converged: {msg}"),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

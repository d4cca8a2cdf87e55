use alloc::string::String;

/// Failures reported by every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument is outside its valid range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The lattice data are inconsistent or geometrically degenerate.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    /// A node reference points outside the basic node set.
    #[error("unknown node {basic} (basic set has {count} nodes)")]
    UnknownNode { basic: usize, count: usize },
    /// A point could not be located in the reference triangulation.
    #[error("point ({x}, {y}) lies outside the triangulation")]
    OutsideTriangulation { x: f64, y: f64 },
    /// A construction did not close up to the required tolerance.
    #[error("closure failed: residual {residual:e} exceeds {tolerance:e}")]
    ClosureFailed { residual: f64, tolerance: f64 },
    /// A requested parameter leaves the reachable range of a mechanism.
    #[error("out of range: {0}")]
    OutOfRange(String),
    /// A solver finished without meeting its stopping criterion.
    #[error("no convergence: {0}")]
    NoConvergence(String),
    /// A precondition on the problem (not a single argument) is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;

use thiserror::Error;

/// Errors shared by every module in the crate.
///
/// Infeasible constraint sets are *not* errors — counts and marginals of
/// infeasible instances are defined to be zero. Errors flag misuse (bad
/// indices, out-of-range values, invalid parameters) or genuine internal
/// invariant violations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph parse error on line {line}: {msg}")]
    GraphParse { line: usize, msg: String },

    #[error("vertex {0} out of range")]
    VertexOutOfRange(u32),

    #[error("vertex {0} has been removed")]
    VertexRemoved(u32),

    #[error("vertex {0} is pinned")]
    VertexPinned(u32),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("value {value} outside [0, {max}]")]
    ValueOutOfRange { value: u32, max: u32 },

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate marginal table: {0}")]
    DegenerateTable(String),

    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),

    #[error("distribution invariant violated: {0}")]
    ClosureViolation(String),

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by rigkit operations.
///
/// Validation findings are not errors; they are returned as data by
/// [`crate::model::validate_asset`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigError {
    #[error("zero extent: all points coincide")]
    ZeroExtent,
    #[error("empty mesh")]
    EmptyMesh,
    #[error("negative weight {value} at row {row}, column {col}")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("not a tree: {0}")]
    NotATree(String),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("quantized coordinate {0} outside [0, {1})")]
    OutOfGrid(i64, u32),
    #[error("sequence overflow: {joints} joints exceed max_joints {max}")]
    SequenceOverflow { joints: usize, max: usize },
    #[error("forward parent reference: token {index} points to parent {parent}")]
    ForwardParent { index: usize, parent: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("unnormalized input: vertex {index} lies outside the unit cube")]
    Unnormalized { index: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no bones")]
    NoBones,
    #[error("empty joint set")]
    EmptyJointSet,
    #[error("empty bone set")]
    EmptyBoneSet,
    #[error("infeasible marginals: row mass {row_total}, column mass {col_total}")]
    InfeasibleMarginals { row_total: f64, col_total: f64 },
    #[error("invalid transport problem: {0}")]
    InvalidTransport(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}")]
    Parse(#[from] ParseError),
}

/// A parse failure with the location that caused it.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{location}: {message}")]
pub struct ParseError {
    /// `line N` for line-oriented formats, a field path for documents.
    pub location: String,
    pub message: String,
}

impl ParseError {
    pub fn at_line(line: usize, message: impl Into<String>) -> Self {
        Self {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    pub fn at_path(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            location: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = RigError> = std::result::Result<T, E>;

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op} (node {node}): {detail}")]
    ShapeMismatch {
        op: &'static str,
        node: usize,
        detail: String,
    },
    #[error("non-finite value produced by {op} at node {node}")]
    NonFinite { op: &'static str, node: usize },
    #[error("backward called before forward")]
    BackwardBeforeForward,
    #[error("seed shape {got:?} does not match output shape {expected:?}")]
    SeedShape {
        expected: alloc::vec::Vec<usize>,
        got: alloc::vec::Vec<usize>,
    },
    #[error("input '{0}' is not bound")]
    UnboundInput(String),
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("duplicate parameter '{0}'")]
    DuplicateParameter(String),
    #[error("array of shape {shape:?} cannot hold {len} values")]
    BadArray {
        shape: alloc::vec::Vec<usize>,
        len: usize,
    },
    #[error("frame is {got_h}x{got_w}, expected {h}x{w}")]
    FrameShape {
        h: usize,
        w: usize,
        got_h: usize,
        got_w: usize,
    },
    #[error("empty sequence")]
    EmptySequence,
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sequence too short: need at least {need}, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("degenerate sequence: every frame is identical (or the rule is a no-op)")]
    DegenerateSequence,
    #[error("non-finite loss at sample {index}")]
    NonFiniteLoss { index: usize },
    #[error("non-finite action")]
    NonFiniteAction,
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("no source to build pairs from")]
    EmptySources,
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("{op}: frame tag mismatch ({detail})")]
    FrameTagMismatch { op: &'static str, detail: String },

    #[error("model output `{0}` is missing")]
    MissingOutput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{op}: non-finite value encountered")]
    NonFinite { op: String },

    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("registration objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("position ({row}, {col}) is outside the {rows}x{cols} grid")]
    OutOfBounds {
        row: f64,
        col: f64,
        rows: usize,
        cols: usize,
    },

    #[error("block is constant (p2 == p98 == {0}); cannot normalize")]
    ConstantBlock(f64),

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by numerics rather than usage or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonFiniteLoss { .. }
                | Error::NonFiniteObjective { .. }
        )
    }
}

pub(crate) fn shape_mismatch(op: &'static str, expected: &[usize], found: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        expected: expected.to_vec(),
        found: found.to_vec(),
    }
}

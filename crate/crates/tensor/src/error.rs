use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("conv3d channel mismatch: input has {input} channels, weight expects {weight}")]
    ChannelMismatch { input: usize, weight: usize },
    #[error("conv3d kernel extents must be odd, got {0:?}")]
    EvenKernel(Vec<usize>),
    #[error("{op}: zero-extent dimension in {shape:?}")]
    ZeroExtent { op: &'static str, shape: Vec<usize> },
    #[error("{op}: invalid argument: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("avgpool3d: extent {extent} not divisible by factor {factor}")]
    NotDivisible { extent: usize, factor: usize },
    #[error("division by zero in {0}")]
    DivisionByZero(&'static str),
    #[error("{op} of negative value {value}")]
    NegativeInput { op: &'static str, value: f64 },
    #[error("{op} of non-positive value {value}")]
    NonPositiveInput { op: &'static str, value: f64 },
    #[error("tensors recorded on different tapes")]
    TapeMismatch,
    #[error("gradient requested for a tensor that is not on the tape")]
    NotTracked,
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("FFT size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("{n_mels} mel bands over-resolve {n_bins} FFT bins")]
    OverResolved { n_mels: usize, n_bins: usize },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("invalid device profile: {0}")]
    InvalidProfile(String),
    #[error("class {class_id} has only {count} segments, too few to stratify")]
    TooSparseToStratify { class_id: usize, count: usize },
    #[error("normalization over a single element with eps = 0")]
    DegenerateNorm,
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got {numel} elements")]
    NonScalarBackward { numel: usize },
    #[error("optimizer step without gradients")]
    EmptyGradients,
    #[error("device mismatch: expected {expected}, found {found}")]
    DeviceMismatch { expected: String, found: String },
    #[error("missing device {0}")]
    MissingDevice(String),
    #[error("class {0} absent from training data")]
    AbsentClass(usize),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged { epoch: usize, batch: usize, detail: String },
    #[error("malformed data: {0}")]
    Malformed(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn arg(detail: impl Into<String>) -> Self {
        Error::InvalidArgument(detail.into())
    }
}

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("no threshold: input has fewer than two distinct values")]
    NoThreshold,
    #[error("region out of bounds: {0}")]
    OutOfBounds(String),
    #[error("mask must contain both classes")]
    SingleClass,
    #[error("unknown code {0} in label raster")]
    UnknownCode(f32),
    #[error("refiner has not been trained")]
    Untrained,
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
}

impl Error {
    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected: alloc::format!("{}x{}", expected.0, expected.1),
            actual: alloc::format!("{}x{}", actual.0, actual.1),
        }
    }
}

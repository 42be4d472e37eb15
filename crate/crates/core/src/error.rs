use alloc::string::String;

/// Errors raised anywhere in the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("singular matrix (pivot {pivot:e} below {threshold:e})")]
    SingularMatrix { pivot: f64, threshold: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss node is not a real scalar")]
    NotScalar,
    #[error("channel matrix is rank deficient (smallest/largest singular value {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("degenerate training data: {0}")]
    DegenerateTraining(&'static str),
    #[error("{solver} did not converge after {iterations} iterations")]
    NoConvergence { solver: &'static str, iterations: usize },
    #[error("objective decreased by {decrease:e} at iteration {iteration}")]
    NonMonotone { iteration: usize, decrease: f64 },
    #[error("labels missing for sample {0}")]
    MissingLabels(usize),
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub fn at_sample(self, index: usize) -> Self {
        Error::Sample {
            index,
            source: alloc::boxed::Box::new(self),
        }
    }
}

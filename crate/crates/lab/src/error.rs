use std::path::PathBuf;

use beamlab_core::Error as CoreError;

/// Errors of the experiment harness. Each maps to a stable process exit
/// code, see [`LabError::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing checkpoint {}", .0.display())]
    MissingCheckpoint(PathBuf),
    #[error("malformed {what} {}: {msg}", path.display())]
    Format {
        what: &'static str,
        path: PathBuf,
        msg: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(CoreError),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_SHAPE: i32 = 4;
pub const EXIT_MISSING_CHECKPOINT: i32 = 5;

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => EXIT_CONFIG,
            LabError::Solver(_) => EXIT_SOLVER,
            LabError::Shape(_) => EXIT_SHAPE,
            LabError::MissingCheckpoint(_) => EXIT_MISSING_CHECKPOINT,
            LabError::Format { .. } | LabError::Io { .. } => EXIT_OTHER,
            LabError::Core(e) => core_exit_code(e),
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
        let path = path.into();
        move |source| LabError::Io { path, source }
    }

    pub fn format(what: &'static str, path: impl Into<PathBuf>, msg: impl ToString) -> LabError {
        LabError::Format {
            what,
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::InvalidConfig(_) | CoreError::Geometry(_) | CoreError::MissingLabels(_) => EXIT_CONFIG,
        CoreError::ShapeMismatch(_) => EXIT_SHAPE,
        CoreError::NoConvergence { .. }
        | CoreError::NonMonotone { .. }
        | CoreError::SingularMatrix { .. }
        | CoreError::RankDeficient { .. }
        | CoreError::DivisionByZero(_) => EXIT_SOLVER,
        CoreError::Sample { source, .. } => match core_exit_code(source) {
            EXIT_CONFIG | EXIT_SHAPE => core_exit_code(source),
            _ => EXIT_SOLVER,
        },
        _ => EXIT_OTHER,
    }
}

impl From<CoreError> for LabError {
    fn from(e: CoreError) -> Self {
        LabError::Core(e)
    }
}

use std::path::PathBuf;

/// Errors raised by the diagnostics toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("duplicate points: row {row} has a zero-distance neighbour")]
    DuplicatePoints { row: usize },

    #[error("duplicate or zero-distance points: non-finite neighbour-distance ratio at row {row}")]
    NonFiniteRatio { row: usize },

    #[error("degenerate fit: all abscissae are zero")]
    DegenerateFit,

    #[error("degenerate features: every feature vector coincides with the mean")]
    DegenerateFeatures,

    #[error("undefined correlation: {0} has constant values")]
    UndefinedCorrelation(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("vector is not unit length (norm {norm})")]
    NotUnit { norm: f64 },

    #[error("target coordinate {coord} is constant (std {std})")]
    ConstantTarget { coord: usize, std: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("generator failed: {0}")]
    Generator(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics themselves (as opposed to bad input data).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateFit
                | Error::DegenerateFeatures
                | Error::NonFiniteRatio { .. }
                | Error::Divergence { .. }
                | Error::UndefinedCorrelation(_)
                | Error::Generator(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

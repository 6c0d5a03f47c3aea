use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An operation needs more points than it was given.
    TooFewPoints { needed: usize, got: usize },
    EmptyCluster,
    LengthMismatch { expected: usize, got: usize },
    InvalidParameter(&'static str),
    /// Silhouette is only defined for two or more clusters.
    UndefinedSilhouette { n_clusters: usize },
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    EmptyPool,
    SingleClassValidation,
    WrongModelKind { expected: &'static str },
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    EmptyInput(&'static str),
    /// An error raised inside a named pipeline stage.
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::TooFewPoints { needed, got } => {
                write!(f, "too few points: need more than {needed}, got {got}")
            }
            Error::EmptyCluster => f.write_str("cluster has no points"),
            Error::LengthMismatch { expected, got } => {
                write!(f, "length mismatch: expected {expected}, got {got}")
            }
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::UndefinedSilhouette { n_clusters } => write!(
                f,
                "undefined silhouette: needs at least 2 clusters, got {n_clusters}"
            ),
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected:?}, got {got:?}")
            }
            Error::EmptyPool => f.write_str("ground pool is empty"),
            Error::SingleClassValidation => {
                f.write_str("validation set must contain both classes")
            }
            Error::WrongModelKind { expected } => write!(f, "expected a {expected} model"),
            Error::NonFiniteLoss { epoch, batch, loss } => write!(
                f,
                "training diverged: loss {loss} at epoch {epoch}, batch {batch}"
            ),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::Stage { stage, source } => write!(f, "{stage}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Stage { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

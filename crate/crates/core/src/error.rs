use crate::recon::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("solver diverged after {} iterations", .0.iterations)]
    Divergence(Box<SolveReport>),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u64),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("png encoding failed: {0}")]
    Png(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Divergence(_) => 3,
            Error::UnsupportedVersion(_)
            | Error::TruncatedPayload { .. }
            | Error::DimensionMismatch(_)
            | Error::MalformedHeader(_)
            | Error::Json(_) => 2,
            Error::InvalidArgument(_) | Error::InvalidConfig(_) | Error::ShapeMismatch(_) => 1,
            Error::Io(_) | Error::Png(_) => 2,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("instruction does not match any supported template: {0:?}")]
    UnsupportedTemplate(String),
    #[error("instruction has an empty {0} phrase")]
    EmptyPhrase(&'static str),
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("unknown distractor domain {0:?}")]
    UnknownDomain(String),
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid RLE: {0}")]
    InvalidRle(String),

    #[error("segmentation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("backend reported error: {0}")]
    Backend(String),
    #[error("segmentation failed for {} concept(s): {}", .0.len(), format_failures(.0))]
    Segmentation(Vec<(String, Error)>),
    #[error("fixture has no recording for concept {0:?}")]
    FixtureMiss(String),

    #[error("no target instance found")]
    NoTargetFound,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("episode {0:?} is already initialized")]
    EpisodeAlreadyInitialized(String),
    #[error("frame timestep {got} does not follow {last}")]
    FrameOutOfOrder { last: u64, got: u64 },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_failures(failures: &[(String, Error)]) -> String {
    failures
        .iter()
        .map(|(c, e)| format!("{c}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// True for failures that originate in an external backend rather than in
    /// the caller's inputs or configuration.
    pub fn is_backend(&self) -> bool {
        match self {
            Error::BackendUnavailable(_)
            | Error::Protocol(_)
            | Error::Timeout(_)
            | Error::Backend(_)
            | Error::FixtureMiss(_) => true,
            Error::Segmentation(inner) => inner.iter().any(|(_, e)| e.is_backend()),
            _ => false,
        }
    }
}

pub(crate) fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

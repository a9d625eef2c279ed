use std::path::PathBuf;

/// Errors raised anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid distribution in {what}: {detail}")]
    InvalidDistribution { what: String, detail: String },

    #[error("emission supports of states {a} and {b} overlap at observation {obs}")]
    Disjointness { a: usize, b: usize, obs: usize },

    #[error("singular linear system while computing {0}")]
    Singular(&'static str),

    #[error("entropy decomposition violated: |lhs - rhs| = {gap:e}")]
    DecompositionViolation { gap: f64 },

    #[error("model assigns zero probability to observation {obs} which has mass {mass}")]
    InfiniteSurprise { obs: usize, mass: f64 },

    #[error("instance exceeds brute-force envelope: {0}")]
    Envelope(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("episode already ended after {steps} steps")]
    EpisodeEnded { steps: usize },

    #[error("abstraction error: {0}")]
    Abstraction(String),

    #[error("action {action} out of range (n_actions = {n_actions})")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("fixture generation failed after {0} attempts")]
    Generation(usize),

    #[error("parse error at {location}: {detail}")]
    Parse { location: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), detail: detail.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

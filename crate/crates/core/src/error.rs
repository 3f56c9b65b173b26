use std::path::PathBuf;

/// Toolkit-wide error type. Every variant carries a stable machine-parseable
/// code (see [`Error::code`]) that the CLI prints as `ERROR[code]: ...`.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("unsupported dtype {found:?}")]
    UnsupportedDtype { found: String },

    #[error("tensor {name:?} not found in archive")]
    NameNotFound { name: String },

    #[error("dtype {dtype} is not writable (decode-only)")]
    UnwritableDtype { dtype: String },

    #[error("io failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("insufficient history: window of {requested} requested, only {available} checkpoints at or before step {anchor}")]
    InsufficientHistory {
        requested: usize,
        available: usize,
        anchor: u64,
    },

    #[error("anchor step {step} not present in checkpoint series")]
    AnchorNotFound { step: u64 },

    #[error("incompatible archives:\n{report}")]
    IncompatibleArchives { report: String },

    #[error("line {line}: duplicate record for ({checkpoint}, {benchmark}, {problem})")]
    DuplicateRecord {
        line: usize,
        checkpoint: String,
        benchmark: String,
        problem: String,
    },

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: greedy record must have exactly one outcome, got {arity}")]
    GreedyArityViolation { line: usize, arity: usize },

    #[error("no records match checkpoint {checkpoint:?} and benchmark {benchmark:?}")]
    NoMatchingRecords {
        checkpoint: String,
        benchmark: String,
    },

    #[error("insufficient samples for k={k}: {}", problems.join(", "))]
    InsufficientSamples { k: u64, problems: Vec<String> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("trajectory needs at least 2 points, got {got}")]
    TooFewPoints { got: usize },

    #[error("tau-b undefined: all {0} values tied")]
    AllTied(usize),

    #[error("rank table needs at least 2 models, got {got}")]
    TooFewModels { got: usize },

    #[error("schema mismatch in {path}: expected header {expected:?}, got {got:?}")]
    SchemaMismatch {
        path: PathBuf,
        expected: String,
        got: String,
    },
}

impl Error {
    /// Stable code used in CLI diagnostics (`ERROR[code]: message`).
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedManifest(_) => "MalformedManifest",
            Error::UnsupportedDtype { .. } => "UnsupportedDtype",
            Error::NameNotFound { .. } => "NameNotFound",
            Error::UnwritableDtype { .. } => "UnwritableDtype",
            Error::IoFailure { .. } => "IoFailure",
            Error::InsufficientHistory { .. } => "InsufficientHistory",
            Error::AnchorNotFound { .. } => "AnchorNotFound",
            Error::IncompatibleArchives { .. } => "IncompatibleArchives",
            Error::DuplicateRecord { .. } => "DuplicateRecord",
            Error::MalformedLine { .. } => "MalformedLine",
            Error::GreedyArityViolation { .. } => "GreedyArityViolation",
            Error::NoMatchingRecords { .. } => "NoMatchingRecords",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::Domain(_) => "DomainError",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::AllTied(_) => "AllTied",
            Error::TooFewModels { .. } => "TooFewModels",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use crate::network::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("case validation failed with {} error(s): {}", .0.len(), summarize(.0))]
    Validation(Vec<Diagnostic>),

    #[error("unknown investment option id {0}")]
    UnknownOption(u32),

    #[error("variable layout mismatch: expected {expected} variables, found {found}")]
    LayoutMismatch { expected: usize, found: usize },

    #[error("invalid problem structure: {0}")]
    Structure(String),

    #[error("coalition value missing for {0}")]
    MissingCoalition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("too many players ({players}) for the full game (cap {cap}); screen options or use sampling")]
    TooManyPlayers { players: usize, cap: usize },

    #[error("journal does not match this run: {0}")]
    JournalMismatch(String),

    #[error("game artifact holds no coalition values")]
    EmptyGame,

    #[error("game artifact is inconsistent: {0}")]
    Inconsistent(String),

    #[error("solver failed with status {0}")]
    Solver(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for domain/validation failures, 2 for I/O and usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::InvalidArgument(_) => 2,
            _ => 1,
        }
    }
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("{}: {}", d.entity, d.message))
        .collect::<Vec<_>>()
        .join("; ")
}

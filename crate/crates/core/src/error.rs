use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What went wrong talking to an external model service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalKind {
    Transport,
    Timeout,
    Auth,
    Protocol,
}

impl std::fmt::Display for ExternalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExternalKind::Transport => "transport error",
            ExternalKind::Timeout => "timeout",
            ExternalKind::Auth => "authentication error",
            ExternalKind::Protocol => "protocol error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("reference error: {0}")]
    Reference(String),

    #[error("distribution error: {0}")]
    Distribution(String),

    #[error("cycle detected through attribute(s): {}", .0.join(", "))]
    Cycle(Vec<String>),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("no generator registered for external template `{0}`")]
    UnresolvedGenerator(String),

    #[error("table CPD for `{attr}` has no row for parent values ({parents})")]
    MissingRow { attr: String, parents: String },

    #[error("external CPD on `{0}` has no explicit probability")]
    ExternalCpd(String),

    #[error("joint state space too large ({0} assignments)")]
    StateSpaceOverflow(u128),

    #[error("insufficient structure: {0}")]
    InsufficientStructure(String),

    #[error("exhausted resampling budget: {0}")]
    ExhaustedResampling(String),

    #[error("missing template: {0}")]
    MissingTemplate(String),

    #[error("cannot generate distractors: {0}")]
    CannotGenerateDistractors(String),

    #[error("inapplicable: {0}")]
    Inapplicable(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("unsupported dataset version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("filler pool is empty")]
    EmptyPool,

    #[error("debug sidecar missing: {}", .0.display())]
    MissingSidecar(PathBuf),

    #[error("{kind} for `{item}`: {detail}")]
    External {
        item: String,
        kind: ExternalKind,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors a generator can recover from by drawing a fresh seed.
    pub fn is_resample(&self) -> bool {
        matches!(
            self,
            Error::InsufficientStructure(_)
                | Error::ExhaustedResampling(_)
                | Error::CannotGenerateDistractors(_)
                | Error::Inapplicable(_)
                | Error::Invariant(_)
        )
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Reference(_)
            | Error::Distribution(_)
            | Error::Cycle(_)
            | Error::Validation(_)
            | Error::Config(_)
            | Error::MissingTemplate(_)
            | Error::VersionMismatch { .. }
            | Error::MissingSidecar(_) => 2,
            Error::External { .. } => 4,
            _ => 3,
        }
    }
}

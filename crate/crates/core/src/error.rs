use thiserror::Error;

/// Errors produced anywhere in the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Restricted design matrix is numerically rank deficient.
    #[error("rank-deficient design matrix; dependent columns: {}", .columns.join(", "))]
    Singular { columns: Vec<String> },

    #[error("not a linear oscillator model; active terms: [{}]", .active.join(", "))]
    NotLinear { active: Vec<String> },

    #[error("simulation diverged at t = {time:.6} s")]
    Divergence { time: f64 },

    #[error("detected {detected} cardiac cycles, need at least {required}")]
    TooFewCycles { detected: usize, required: usize },

    #[error("training data must contain at least two classes")]
    DegenerateTraining,

    #[error("malformed rows:\n{}", .diagnostics.join("\n"))]
    Malformed { diagnostics: Vec<String> },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 I/O, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Singular { .. } | Error::Divergence { .. } => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

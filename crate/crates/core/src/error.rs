use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit codes used by the command-line tool.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sampler failed at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: header mismatch, expected [{}] but found [{}]", path.display(), expected.join(", "), found.join(", "))]
    HeaderMismatch {
        path: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("{}: row {row}, column {column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{}: file contains no data rows", path.display())]
    EmptyFile { path: PathBuf },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn not_spd(context: impl Into<String>) -> Self {
        Error::NotSpd(context.into())
    }

    pub fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSpd(_) | Error::Numerical(_) => "numerical",
            Error::AtIteration { source, .. } => source.kind(),
            Error::InvalidState(_) => "invalid_state",
            Error::InvalidArgument(_) | Error::Dimension(_) => "invalid_argument",
            Error::HeaderMismatch { .. }
            | Error::Parse { .. }
            | Error::EmptyFile { .. }
            | Error::Data(_)
            | Error::Csv(_) => "data",
            Error::Config(_) | Error::Json(_) => "config",
            Error::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "numerical" | "invalid_state" => exit_code::NUMERICAL,
            "data" | "io" => exit_code::DATA,
            _ => exit_code::CONFIG,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the fit / generate / evaluate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),

    #[error("{name} = {value} is outside the valid range {range}")]
    OutOfRange {
        name: String,
        value: f64,
        range: String,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("column {0} is constant")]
    ConstantColumn(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("grid spec mismatch: expected {expected}, found {found}")]
    GridMismatch { expected: String, found: String },

    #[error("incompatible format version: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("nothing to attack: no hidden points in the corpus")]
    NothingToAttack,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn out_of_range(name: impl Into<String>, value: f64, range: impl Into<String>) -> Self {
        Error::OutOfRange {
            name: name.into(),
            value,
            range: range.into(),
        }
    }

    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) | Error::OutOfRange { .. } | Error::Domain(_) => "domain",
            Error::Parse { .. } | Error::Format(_) | Error::Json(_) => "parse",
            Error::InsufficientData(_) | Error::ConstantColumn(_) | Error::NothingToAttack => {
                "insufficient_data"
            }
            Error::Numerical(_) => "numerical",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Config(_) => "config",
            Error::NotFound(_) => "not_found",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code used by the command-line front end. Clap usage errors exit with 2.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 3,
            "not_found" => 4,
            "io" => 5,
            "parse" => 6,
            "grid_mismatch" => 7,
            "version_mismatch" => 8,
            "domain" => 9,
            "insufficient_data" => 10,
            _ => 11,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by the command-line front end to choose an
/// exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("empty series")]
    EmptySeries,
    #[error("constant series (max == min), cannot scale")]
    ConstantSeries,
    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("split counts {n_train} + {n_test} exceed series length {len}")]
    SplitOverflow {
        n_train: usize,
        n_test: usize,
        len: usize,
    },
    #[error("monotone component: too few extrema to sift")]
    MonotoneComponent,
    #[error("invalid config field `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } => ErrorClass::Config,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptySeries
            | Error::ConstantSeries
            | Error::TooShort { .. }
            | Error::SplitOverflow { .. }
            | Error::ModelFormat(_) => ErrorClass::Data,
            Error::MonotoneComponent | Error::Dimension(_) | Error::Divergence { .. } => {
                ErrorClass::Numeric
            }
            Error::Stage { source, .. } => source.class(),
        }
    }
}

/// Extension for tagging results with a stage name.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

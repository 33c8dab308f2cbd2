use std::fmt;

use crate::config::ConfigError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} of {len} is not divisible by {by}")]
    NotDivisible {
        what: &'static str,
        len: usize,
        by: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("waveform has {samples} samples, shorter than one frame of {frame} samples")]
    TooShort { samples: usize, frame: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed wav file: {0}")]
    MalformedWav(String),

    #[error("unsupported wav encoding: {0}")]
    UnsupportedWav(String),

    #[error("pseudo-inverse is numerically singular: pivot {pivot:e} below tolerance {tolerance:e}")]
    Singular { pivot: f64, tolerance: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("invalid phase transition: {0}")]
    Transition(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("{0}")]
    Config(ConfigErrors),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Every problem found while validating a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl From<ConfigErrors> for Error {
    fn from(e: ConfigErrors) -> Self {
        Error::Config(e)
    }
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

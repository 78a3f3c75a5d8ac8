// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere along the detection chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty series")]
    EmptySeries,

    #[error("window longer than series (window {window}, series {series})")]
    WindowTooLong { window: usize, series: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("symbol code {code} out of range for an alphabet of {size} symbols")]
    CodeOutOfRange { code: usize, size: usize },

    #[error("perplexity too large: {perplexity} with only {points} points")]
    PerplexityTooLarge { perplexity: f64, points: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, skipping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 bad config, 3 input error, 4 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self.root() {
            Error::InvalidParameter(_)
            | Error::PerplexityTooLarge { .. }
            | Error::WindowTooLong { .. } => 2,
            Error::EmptySeries
            | Error::CodeOutOfRange { .. }
            | Error::Malformed(_)
            | Error::DimensionMismatch(_)
            | Error::Io(_) => 3,
            Error::Numerical(_) => 4,
            Error::Stage { .. } => unreachable!("root() never returns a stage wrapper"),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Malformed(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Malformed(err.to_string())
    }
}

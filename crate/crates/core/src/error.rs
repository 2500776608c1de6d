// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("{rejected} of {total} rows rejected; check the column mapping")]
    TooManyRejected { rejected: usize, total: usize },

    #[error("name reduces to empty: {0:?}")]
    EmptyName(String),

    #[error("empty market")]
    EmptyMarket,

    #[error("no tail to fit")]
    NoTail,

    #[error(
        "line graph would have {projected} edges (cap {cap}); largest hubs: {}",
        hubs.join(", ")
    )]
    LineGraphTooLarge {
        projected: u64,
        cap: u64,
        hubs: Vec<String>,
    },

    #[error("statistic `{0}` is undefined on the observed labels")]
    UndefinedStatistic(String),

    #[error("zero variance")]
    ZeroVariance,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

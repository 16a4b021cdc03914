//! Instance files, synthetic generators, and the ratings-CSV pipeline.

mod ratings;
mod synthetic;
mod text;

use std::path::PathBuf;

use thiserror::Error;

use crate::market::MarketError;

pub use ratings::{
    filter_ratings, ingest_ratings, ingest_ratings_from_reader, read_ratings, Fill, IngestOptions, Rating, RatingsTable,
};
pub use synthetic::{generate_synthetic, generate_unnormalized, Distribution, SyntheticSpec};
pub use text::{format_instance, parse_instance, read_instance, write_instance, FORMAT_MAGIC};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("malformed ratings csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("ratings record {record}: {msg}")]
    BadRating { record: u64, msg: String },
    #[error("no users or items left after filtering")]
    EmptyAfterFilter,
    #[error("missing rating for user `{user}` and item `{item}`")]
    MissingEntry { user: String, item: String },
    #[error("user `{0}` has only zero ratings after filling")]
    ZeroUser(String),
    #[error("item `{0}` has only zero ratings after filling")]
    ZeroItem(String),
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
}

impl IoError {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::File { path: path.into(), source }
    }
}

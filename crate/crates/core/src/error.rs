use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate batch: batch-norm training needs at least 2 values per channel, got {0}")]
    DegenerateBatch(usize),

    #[error("pooling window {window} exceeds input length {length}")]
    EmptyPool { window: usize, length: usize },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("imputation error for user {user_id}: only {observed} observed readings (need 4)")]
    Imputation { user_id: String, observed: usize },

    #[error("standardization error for user {0}: series has zero variance")]
    Standardization(String),

    #[error("stratification error: class {label} has {count} members, fewer than {folds} folds")]
    Stratification { label: u8, count: usize, folds: usize },

    #[error("auc undefined: labels contain a single class")]
    AucUndefined,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

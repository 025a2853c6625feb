use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty corpus: no matching documents under {0}")]
    EmptyCorpus(PathBuf),

    #[error("chunk budget {0} is below the minimum of {min}", min = crate::corpus::MIN_CHUNK_BUDGET)]
    BudgetTooSmall(usize),

    #[error("fixture miss: no recorded completion for prompt {prompt_hash} (model {model})")]
    FixtureMiss { model: String, prompt_hash: String },

    #[error("provider failure after {attempts} attempts: {message}")]
    Provider { attempts: u32, message: String },

    #[error("template {template}: {message}")]
    Template { template: &'static str, message: String },

    #[error("malformed fixture line {line} in {path}: {message}")]
    Fixture {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown attribute {attribute:?} for document {doc_id:?}")]
    UnknownAttribute { doc_id: String, attribute: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Read {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Write {
            path: path.into(),
            source,
        }
    }
}

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    Schema(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("empty dataset: no usable contexts")]
    EmptyDataset,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("missing scores for {context_id}: {words:?}")]
    MissingScore {
        context_id: String,
        words: Vec<String>,
    },

    #[error("collection error for context {context_id}: {message}")]
    Collection { context_id: String, message: String },

    #[error("vocab error: {0}")]
    Vocab(String),

    #[error("tagging error: missing tags for {0:?}")]
    Tagging(Vec<String>),

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("numerical error at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    #[error("report error: {0}")]
    Report(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

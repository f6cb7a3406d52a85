use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },

    #[error("empty split: no user has at least {min_len} interactions")]
    EmptySplit { min_len: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("no eligible user: every sequence has fewer than two items")]
    NoEligibleUser,

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infinite divergence: item {item} has mass under p but none under q")]
    InfiniteDivergence { item: u32 },

    #[error("no overlapping targets between evaluation pairs and training representation")]
    NoOverlappingTargets,

    #[error("discrimination needs at least two distinct training targets, found {0}")]
    TooFewTargets(usize),

    #[error("missing prediction for evaluation pair {0}")]
    MissingPrediction(usize),

    #[error("unknown strategy `{0}` (expected LT, MT or SW)")]
    UnknownStrategy(String),

    #[error("unknown {what} `{value}`")]
    UnknownName { what: &'static str, value: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

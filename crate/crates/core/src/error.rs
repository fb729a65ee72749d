use thiserror::Error;

/// Errors raised by the analysis engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("unknown category `{value}` in column `{column}`")]
    UnknownCategory { column: String, value: String },

    #[error("duplicate participant id `{0}`")]
    DuplicateId(String),

    #[error("unknown participant id `{0}`")]
    UnknownId(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` is not {expected}")]
    ColumnKind { column: String, expected: &'static str },

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("requested {requested} {kind} pairs but only {available} are available")]
    NotEnoughPairs {
        kind: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("empty constraint set")]
    EmptyConstraints,

    #[error("need at least {needed} participants, got {got}")]
    TooFewParticipants { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("{0}")]
    Empty(&'static str),

    #[error("evaluation set needs both outcome classes")]
    OneClass,

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

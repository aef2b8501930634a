use thiserror::Error;

/// Errors raised by table construction and the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("drugs listed both as interest and reference: {0:?}")]
    DisjointnessViolation(Vec<String>),

    #[error("no AE label matches any of the keywords")]
    NoMatchingRows,

    #[error("degenerate table: {0}")]
    DegenerateTable(String),

    #[error("degenerate marginals for AE {ae} / drug {drug}: {reason}")]
    DegenerateMarginals {
        ae: usize,
        drug: usize,
        reason: String,
    },

    #[error("cell ({ae}, {drug}) has N = {n} but expected baseline 0")]
    ImpossibleBaseline { ae: usize, drug: usize, n: u64 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("grid selection failed: {0}")]
    GridFailure(String),

    #[error("AIC evaluation failed: {0}")]
    AicFailure(String),

    #[error("malformed input at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

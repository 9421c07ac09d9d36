use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("target column `{0}` absent")]
    MissingTarget(String),
    #[error("zero data rows")]
    NoRows,
    #[error("column `{0}` has zero non-missing cells")]
    EmptyColumn(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("invalid target value `{value}` at row {row}: {reason}")]
    InvalidTarget {
        row: usize,
        value: String,
        reason: &'static str,
    },
    #[error("unsupported task: {0}")]
    UnsupportedTask(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("class {class} has fewer than 2 rows; cannot stratify")]
    TooFewInClass { class: u32 },
    #[error("fewer than 2 jointly present rows")]
    InsufficientOverlap,
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("operand kind mismatch for `{op}`: {detail}")]
    KindMismatch { op: String, detail: String },
    #[error("empty training rows")]
    EmptyTraining,
    #[error("all candidate feature values are missing on the training rows")]
    AllMissing,
    #[error("fold {fold} contains a single class")]
    SingleClassFold { fold: usize },
    #[error("subsample of {rows} rows is smaller than min_leaf {min_leaf}")]
    SubsampleTooSmall { rows: usize, min_leaf: usize },
    #[error("probe subset of {rows} rows is too small for {folds} folds")]
    ProbeTooSmall { rows: usize, folds: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

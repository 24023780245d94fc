use thiserror::Error;

#[derive(Debug, Error)]
pub enum VoieError {
    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("table has no column `{0}`")]
    MissingColumn(String),

    #[error("table has no outcome for path {path} (unit {unit})")]
    MissingPath { path: String, unit: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("variant shares sum to {actual}, expected {expected}")]
    ShareSum { actual: f64, expected: f64 },

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("variant group `{0}` is empty")]
    EmptyVariantGroup(String),

    #[error("assignment count {count} exceeds enumeration cap {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("bucket {bucket} has {count} units, needs at least {required}")]
    InsufficientBucket {
        bucket: String,
        count: usize,
        required: usize,
    },

    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaDomain(f64),

    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("{estimates} estimates but {weights} weights")]
    LengthMismatch { estimates: usize, weights: usize },

    #[error("no estimates to aggregate")]
    EmptyInput,

    #[error("every estimate has infinite variance")]
    AllInfiniteVariance,

    #[error("estimate `{0}` has no variance")]
    MissingVariance(String),

    #[error("variance is zero; test statistic undefined")]
    ZeroVariance,

    #[error("normalization baselines are equal")]
    ZeroDenominator,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema mismatch: expected `{expected}`, found `{found}`")]
    SchemaVersion { expected: String, found: String },

    #[error("record `{id}`: {message}")]
    KindMismatch { id: String, message: String },

    #[error("unknown grouping key `{0}`")]
    UnknownGroupKey(String),

    #[error("no record carries a per-day effect series")]
    NoSeries,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, VoieError>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A petal has no finite observation anywhere (minimal-data violation).
    #[error("petal {petal} has no finite observations")]
    EmptyPetal { petal: usize },

    #[error("tensor contains no finite value at all")]
    NoDataAnywhere,

    #[error("variance at index {index} is not strictly positive ({value})")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid cluster map: {0}")]
    InvalidClusters(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("cell ({persona}, {round}, {petal}) is observed, nothing to impute")]
    CellObserved {
        persona: usize,
        round: usize,
        petal: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: duplicate record for persona {persona:?}, round {round}, petal {petal:?}")]
    DuplicateKey {
        line: u64,
        persona: String,
        round: usize,
        petal: String,
    },

    #[error("line {line}: persona {persona:?} listed under clusters {first:?} and {second:?}")]
    InconsistentCluster {
        line: u64,
        persona: String,
        first: String,
        second: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyPetal { .. } => "EMPTY_PETAL",
            Error::NoDataAnywhere => "NO_DATA_ANYWHERE",
            Error::NonPositiveVariance { .. } => "NON_POSITIVE_VARIANCE",
            Error::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            Error::InvalidTensor(_) => "INVALID_TENSOR",
            Error::InvalidClusters(_) => "INVALID_CLUSTERS",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::InvalidProbabilities(_) => "INVALID_PROBABILITIES",
            Error::CellObserved { .. } => "CELL_OBSERVED",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::DuplicateKey { .. } => "DUPLICATE_KEY",
            Error::InconsistentCluster { .. } => "INCONSISTENT_CLUSTER",
            Error::Invariant(_) => "INVARIANT_FAILURE",
            Error::Io(_) => "IO_ERROR",
        }
    }

    /// Process exit status: 1 usage/input, 2 data-assumption violation,
    /// 3 internal invariant failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::EmptyPetal { .. } | Error::NoDataAnywhere => 2,
            Error::Invariant(_)
            | Error::NonPositiveVariance { .. }
            | Error::InvalidProbabilities(_)
            | Error::DimensionMismatch(_) => 3,
            _ => 1,
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("row {row}: feature column {column} is negative ({value})")]
    NegativeFeature { row: usize, column: usize, value: i64 },

    #[error("row {row}: expected {expected} features, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("row {row}: label {label} is outside [0, {n_classes})")]
    LabelOutOfRange { row: usize, label: i64, n_classes: usize },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("dataset must have at least one feature column")]
    NoFeatures,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("spread degree d={d} exceeds the number of partitions kd={kd}")]
    DTooLarge { d: usize, kd: usize },

    #[error("invalid spread offsets: {0}")]
    InvalidOffsets(String),

    #[error("unknown learner kind `{0}`")]
    UnknownLearnerKind(String),

    #[error("learner kind `{0}` cannot be trained in-process")]
    NotTrainable(String),

    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ground-truth labels are required")]
    MissingLabels,

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("vote {vote} at row {row} is outside [0, {n_classes})")]
    VoteOutOfRange { row: usize, vote: usize, n_classes: usize },

    #[error("row {row} has {found} votes, expected kd={expected}")]
    RowLength { row: usize, expected: usize, found: usize },

    #[error("enumeration of {count} subsets exceeds the cap of {cap}")]
    EnumerationTooLarge { count: u128, cap: u128 },

    #[error("instance size {size} exceeds the limit of {limit}")]
    InstanceTooLarge { size: usize, limit: usize },

    #[error("{0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NegativeFeature { .. } => "NegativeFeature",
            Error::RaggedRow { .. } => "RaggedRow",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::Parse { .. } => "Parse",
            Error::NoFeatures => "NoFeatures",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::DTooLarge { .. } => "DTooLarge",
            Error::InvalidOffsets(_) => "InvalidOffsets",
            Error::UnknownLearnerKind(_) => "UnknownLearnerKind",
            Error::NotTrainable(_) => "NotTrainable",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::MissingLabels => "MissingLabels",
            Error::EmptyTestSet => "EmptyTestSet",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::VoteOutOfRange { .. } => "VoteOutOfRange",
            Error::RowLength { .. } => "RowLength",
            Error::EnumerationTooLarge { .. } => "EnumerationTooLarge",
            Error::InstanceTooLarge { .. } => "InstanceTooLarge",
            Error::Io(_) => "Io",
        }
    }

    /// True for errors caused by a configured size limit rather than bad data.
    pub fn is_limit(&self) -> bool {
        matches!(
            self,
            Error::EnumerationTooLarge { .. } | Error::InstanceTooLarge { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

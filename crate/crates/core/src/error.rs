use thiserror::Error;

pub type Result<T, E = GusError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GusError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported self-join: relation(s) {0} appear on both sides")]
    SelfJoin(String),

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("type error: {0}")]
    Type(String),

    #[error("invalid probability {value} for {what}")]
    InvalidProbability { what: String, value: f64 },

    #[error("sample size {n} exceeds population {population}")]
    SampleSize { n: usize, population: usize },

    #[error("degenerate sampling: {0}")]
    Degenerate(String),

    #[error("not identifiable: b_{{{subset}}} = 0, the y-term for this subset cannot be estimated")]
    NotIdentifiable { subset: String },

    #[error("unsupported plan: {0}")]
    Unsupported(String),

    #[error("enumeration infeasible: {configurations} configurations exceed the limit of {limit}")]
    EnumerationInfeasible { configurations: f64, limit: u64 },

    #[error("plan parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("expression parse error at offset {offset}: {message}")]
    Expr { offset: usize, message: String },

    #[error("ingestion error in {source_name}: {message}")]
    Ingest { source_name: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GusError {
    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        GusError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Errors caused by the plan or its inputs rather than by estimation or IO.
    pub fn is_plan_error(&self) -> bool {
        matches!(
            self,
            GusError::Schema(_)
                | GusError::SelfJoin(_)
                | GusError::UnknownTable(_)
                | GusError::UnknownColumn(_)
                | GusError::Type(_)
                | GusError::InvalidProbability { .. }
                | GusError::SampleSize { .. }
                | GusError::Unsupported(_)
                | GusError::Parse { .. }
                | GusError::Expr { .. }
                | GusError::Ingest { .. }
                | GusError::Json(_)
                | GusError::Csv(_)
        )
    }

    pub fn is_not_identifiable(&self) -> bool {
        matches!(
            self,
            GusError::NotIdentifiable { .. } | GusError::Degenerate(_)
        )
    }
}

use thiserror::Error;

/// Errors produced by loading, fitting, evaluation, and solving.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    /// Data validation failure with a file/row location.
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },

    #[error("group `{group}` has zero total weight but is referenced by the computation")]
    EmptyGroup { group: String },

    #[error("model categories do not match scenario groups ({model:?} vs {scenario:?})")]
    GroupMismatch {
        model: Vec<String>,
        scenario: Vec<String>,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("objective `{objective}` is not valid here: {reason}")]
    UnsupportedObjective { objective: String, reason: String },

    #[error("a budget constraint is required for every solve")]
    MissingBudget,

    #[error("enumeration would visit {required} candidates, above the limit {limit}")]
    EnumerationLimit { required: u128, limit: u128 },

    #[error("counterfactual-privilege constraint requires an aggregate (single-outcome) model")]
    TauRequiresAggregateModel,

    #[error("counterfactual proportion vector must be non-negative and sum to 1 (got sum {sum})")]
    OffSimplex { sum: f64 },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl CoreError {
    pub fn invalid(location: impl Into<String>, message: impl Into<String>) -> Self {
        CoreError::Invalid {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        CoreError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("initial counts sum to {sum}, expected population size {total}")]
    Normalization { sum: u64, total: u64 },

    #[error("invalid parameter: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("event budget of {limit} events exceeded at t = {time}")]
    BudgetExceeded { limit: u64, time: f64 },

    #[error("replica {index}: {source}")]
    Replica {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mean-field integration left the simplex at t = {time}: u[{species}] = {value}")]
    Step { time: f64, species: usize, value: f64 },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("need at least {required} replicas, got {got}")]
    InsufficientReplicas { required: usize, got: usize },

    #[error("trajectory for replica {index} has no event log")]
    MissingEventLog { index: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

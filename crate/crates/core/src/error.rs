use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("filter violates the moment condition: sum of coefficients is {sum}")]
    MomentConditionViolated { sum: f64 },

    #[error("degenerate filter: {0}")]
    DegenerateFilter(String),

    #[error("path too short: {len} observations, filter needs at least {needed}")]
    PathTooShort { len: usize, needed: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate MBM specification: {0}")]
    DegenerateSpec(String),

    #[error("covariance matrix is not positive definite (pivot {pivot}, jitter exhausted at {jitter:e})")]
    NotPositiveDefinite { pivot: usize, jitter: f64 },

    #[error("random Hurst field case `{0}` requires a seed")]
    MissingSeed(String),

    #[error("empty neighborhood around t = {t} (n = {n}, alpha = {alpha})")]
    EmptyNeighborhood { t: f64, n: usize, alpha: f64 },

    #[error("all squared variations vanish for dilatation {dilatation}")]
    DegenerateVariations { dilatation: usize },

    #[error("weight matrix is singular")]
    SingularWeightMatrix,

    #[error("lag covariance is not positive semidefinite (lag {lag}, eigenvalue {eigenvalue:e})")]
    NonPositiveDefiniteLagCov { lag: i64, eigenvalue: f64 },

    #[error("h = {h} lies outside the table range [{lo}, {hi}]")]
    OutOfTableRange { h: f64, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("replication {replication} (seed {master_seed}) failed: {source}")]
    Replication {
        master_seed: u64,
        replication: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

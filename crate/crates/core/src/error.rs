use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("transition matrix is not stable (spectral radius {spectral_radius})")]
    NonStationary { spectral_radius: f64 },

    #[error("singular innovation covariance at step {step}")]
    SingularInnovation { step: usize },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("view time {time} outside forecast horizon 0..={horizon}")]
    TimeOutOfHorizon { time: i64, horizon: usize },

    #[error("view time {time} lies before the present")]
    HistoricalTime { time: i64 },

    #[error("blocks have different time indices ({0} vs {1})")]
    TimeMismatch(usize, usize),

    #[error("no factor exposures available at step {0}")]
    MissingBeta(usize),

    #[error("market specification does not cover step {0}")]
    MissingMarketSpec(usize),

    #[error("expected a positive value: {0}")]
    NonPositiveInput(String),

    #[error("expected a positive maturity, got {0}")]
    NonPositiveMaturity(f64),

    #[error("rank-deficient design: {0}")]
    RankDeficientDesign(String),

    #[error("insufficient data: need more than {required} observations, got {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("improper posterior: degrees of freedom {dof} with {dim} responses")]
    ImproperPosterior { dof: f64, dim: usize },

    #[error("degenerate market portfolio (variance {0})")]
    DegenerateMarket(f64),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("empty parameter sample")]
    EmptySample,

    #[error("joint covariance of states and disturbances is missing or malformed: {0}")]
    MissingJointCovariance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub(crate) fn dims(what: impl Into<String>) -> Error {
    Error::DimensionMismatch(what.into())
}

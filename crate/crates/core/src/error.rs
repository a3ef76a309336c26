use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("enumeration over {units} units exceeds the brute-force limit of {limit}")]
    TooLarge { units: usize, limit: usize },

    #[error("sample batch is empty")]
    EmptyBatch,

    #[error("LIF configuration is not calibrated")]
    Uncalibrated,

    #[error("simulation duration {duration} is shorter than {min} (10 refractory periods)")]
    DurationTooShort { duration: f64, min: f64 },

    #[error("activation curve is not sigmoidal: fit RMS residual {residual:.4} exceeds {limit}")]
    NonSigmoidal { residual: f64, limit: f64 },

    #[error("{units} sampling neurons exceed the hardware capacity of {limit} neurons")]
    CapacityExceeded { units: usize, limit: usize },

    #[error("non-finite gradient at epoch {epoch} ({parameter})")]
    NonFiniteGradient { epoch: usize, parameter: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

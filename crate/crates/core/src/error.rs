use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("probability level {0} is outside (0, 1)")]
    Probability(f64),

    #[error("invalid interval: lower bound {lo} is not below upper bound {hi}")]
    Interval { lo: f64, hi: f64 },

    #[error("interval [{lo}, {hi}) carries negligible probability mass")]
    DegenerateInterval { lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("nonstationary volatility model: {0}")]
    Nonstationary(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("{parametrization} loss requires a negative ES forecast, got {es}")]
    EsDomain {
        parametrization: &'static str,
        es: f64,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("loss series were produced by different scoring rules")]
    SpecMismatch,

    #[error("joint loss requires ES forecasts for model {0}")]
    MissingEs(String),

    #[error("degenerate loss differential ({0}): estimated variance is zero")]
    DegenerateDifferential(String),

    #[error("oracle ranking unresolved: {0}")]
    OracleUnresolved(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}

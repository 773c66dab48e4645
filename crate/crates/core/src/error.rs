use thiserror::Error;

/// Errors raised by the model, the numerical kernels and the run pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("density matrix trace is {trace}, expected 1")]
    Trace { trace: f64 },

    #[error("density matrix is not positive: det = {determinant}")]
    Positivity { determinant: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("spinodal undefined for T = {temperature} >= 3J/4 = {limit}")]
    SpinodalUndefined { temperature: f64, limit: f64 },

    #[error("no ferromagnetic solution at T = {temperature}")]
    NoFerromagneticSolution { temperature: f64 },

    #[error("system-apparatus coupling g is zero")]
    ZeroCoupling,

    #[error("magnet-bath coupling gamma is zero")]
    ZeroBathCoupling,

    #[error("coupling dispersion delta_g is zero")]
    ZeroDispersion,

    #[error("pulse time must be positive, got {0}")]
    NegativePulseTime(f64),

    #[error("step size {step} cannot meet the error tolerance at t = {t}")]
    StepTooLarge { t: f64, step: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("quadrature did not converge: estimate {estimate}, error {error}")]
    QuadratureNotConverged { estimate: f64, error: f64 },

    #[error("tail spans {decades:.2} decades, need at least one")]
    InsufficientTail { decades: f64 },

    #[error("g = {g} is not above the critical coupling {g_c}")]
    CriticalOrSubcritical { g: f64, g_c: f64 },

    #[error("trajectory never reaches m = {target}")]
    NeverCrossed { target: f64 },

    #[error("registration failed in sector {sector}")]
    MeasurementFailed { sector: &'static str },

    #[error("N = {n} exceeds the enumeration limit {limit}")]
    TooLarge { n: u64, limit: u64 },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
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

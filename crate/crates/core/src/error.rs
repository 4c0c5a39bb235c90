use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {value} outside the domain of the singular potential (|r| must be < 1)")]
    Domain { value: f64 },

    #[error("iterative solver did not converge: {iterations} iterations, residual {residual:.3e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("no finite coercivity shift certifies lambda = {lambda}")]
    CoercivityFailure { lambda: f64 },

    #[error("Newton iteration diverged at t = {t} (dt = {dt}, residual {residual:.3e})")]
    NewtonDivergence { t: f64, dt: f64, residual: f64 },

    #[error("time step {dt} exceeds the CFL cap {cap}")]
    CflViolation { dt: f64, cap: f64 },

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("unknown oracle '{0}'")]
    UnknownOracle(String),

    #[error("{0}")]
    Io(String),
}

impl Error {
    pub fn config(line: usize, reason: impl Into<String>) -> Self {
        Error::Config {
            line,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag used in CLI failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::NonConvergence { .. } => "non_convergence",
            Error::CoercivityFailure { .. } => "coercivity_failure",
            Error::NewtonDivergence { .. } => "newton_divergence",
            Error::CflViolation { .. } => "cfl_violation",
            Error::Config { .. } => "config",
            Error::UnknownOracle(_) => "unknown_oracle",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

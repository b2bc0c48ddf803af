use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible scaling: factor {factor} is not positive")]
    InfeasibleScaling { factor: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("CFL condition violated (number {cfl:.3}); use at least n_t = {suggested_n_t}")]
    Cfl { cfl: f64, suggested_n_t: usize },

    #[error("trajectory left the grid interior at t = {t}, q = {q}; widen the inventory grid")]
    Domain { t: f64, q: f64 },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// True for failures of the numerical method itself, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::Cfl { .. } | Error::Domain { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

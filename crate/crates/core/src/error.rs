use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent or invalid configuration (shapes, kinds, parameter ranges).
    #[error("configuration error: {0}")]
    Config(String),
    /// Bad call arguments, e.g. reversed date indices.
    #[error("argument error: {0}")]
    Argument(String),
    /// Input data could not be used (parse failures, missing brackets, nonpositive prices).
    #[error("data error: {0}")]
    Data(String),
    /// Numerical failure: nonstationary parameters, non-PSD matrices, Euler breakdown.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Optimizer ran out of budget; carries the best point found so far.
    #[error("optimizer did not converge after {iterations} iterations (best log-likelihood {best_value})")]
    NotConverged {
        iterations: usize,
        best_point: Vec<f64>,
        best_value: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Data(e.to_string())
    }
}

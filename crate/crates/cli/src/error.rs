use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<lsmc::Error> for CliError {
    fn from(e: lsmc::Error) -> Self {
        use lsmc::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Argument(m) => CliError::Usage(m),
            E::Data(m) => CliError::Data(m),
            E::Numerical(m) => CliError::Numerical(m),
            e @ E::NotConverged { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no coupled state exists when the fiducial state is an f_z eigenstate")]
    NoCoupledState,
    #[error("invalid channel: noise matrix has eigenvalue {0:e}")]
    InvalidChannel(f64),
    #[error("unsupported preparation: {0}")]
    UnsupportedPreparation(String),
    #[error("normalization mismatch: {0}")]
    NormalizationMismatch(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for the command-line front end: 3 for numerical
    /// failures, 2 for everything the caller can fix (including unusable paths).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::InvalidChannel(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("vacuum or stagnation: {0}")]
    Vacuum(String),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("inadmissible l0 = {l0}: forbidden interval is ({lo}, {hi})")]
    Admissibility { l0: f64, lo: f64, hi: f64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("singular linear system: smallest pivot {pivot:e} at row {row}")]
    Singular { pivot: f64, row: usize },

    #[error("no convergence: {message}")]
    NonConvergence { message: String, history: Vec<f64> },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    /// `location` is a file line (`line 3`), an environment variable or a command line override.
    #[error("parse error ({location}): {message}")]
    Parse { location: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::Domain(_)
            | Error::Vacuum(_)
            | Error::Regime(_)
            | Error::Admissibility { .. }
            | Error::Parameter(_) => 3,
            Error::NonConvergence { .. } | Error::Singular { .. } | Error::Consistency(_) => 4,
            Error::Geometry(_) => 5,
            Error::Io(_) => 1,
        }
    }
}

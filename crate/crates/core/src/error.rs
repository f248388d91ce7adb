use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("levels {i} and {j} are degenerate (gap {gap:.3e} GHz); use a finite-difference estimate instead")]
    Degenerate { i: usize, j: usize, gap: f64 },

    #[error("level index {0} out of range (expected 0..4)")]
    LevelIndex(usize),

    #[error("inconsistent zero-field level set: {0}")]
    InconsistentLevels(String),

    #[error("inconsistent zero-field splittings (closest level set rms {rms_mhz:.3} MHz): {levels:?}")]
    InconsistentSplittings { rms_mhz: f64, levels: [f64; 4] },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not enough data: {0}")]
    NotEnoughData(String),

    #[error("fit failed: best rms {best_rms_mhz:.3} MHz over {restarts} restarts ({reason})")]
    FitFailed {
        best_rms_mhz: f64,
        restarts: usize,
        reason: String,
    },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Stable short identifier used in machine-readable error records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotHermitian { .. } => "not-hermitian",
            Error::Degenerate { .. } => "degenerate",
            Error::LevelIndex(_) => "level-index",
            Error::InconsistentLevels(_) => "inconsistent-levels",
            Error::InconsistentSplittings { .. } => "inconsistent-splittings",
            Error::InvalidGrid(_) => "invalid-grid",
            Error::InvalidInput(_) => "invalid-input",
            Error::NotEnoughData(_) => "not-enough-data",
            Error::FitFailed { .. } => "fit-failed",
            Error::Config { .. } => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    /// The configuration key or input field responsible, when known.
    pub fn key(&self) -> Option<&str> {
        match self {
            Error::Config { key, .. } => Some(key),
            _ => None,
        }
    }
}

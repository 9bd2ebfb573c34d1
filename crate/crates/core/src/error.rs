use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("field is not Hermitian: max violation {violation:.3e} (tolerance {tolerance:.3e})")]
    SymmetryViolation { violation: f64, tolerance: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("band {band} outside resolved range [{min}, {max}]")]
    BandRange { band: i32, min: i32, max: i32 },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("blow-up detected at t = {time:.6} (band {band}): {reason}")]
    BlowUp { time: f64, band: i32, reason: String },

    #[error("no barrier radius in (0, 2^-10): f has L1 mass {l1_mass:.3e}")]
    BarrierNotFound { l1_mass: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

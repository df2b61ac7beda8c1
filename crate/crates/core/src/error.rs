use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("template invariant violated ({field}): {detail}")]
    Invariant { field: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {format} data: {detail}")]
    Format { format: &'static str, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no constraints: every joint is hidden and no 3D or parameter supervision is present")]
    NoConstraints,

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("measurement `{0}`: cross-section plane intersects no triangles")]
    EmptyCrossSection(&'static str),

    #[error(
        "penetration resolution did not converge after {sweeps} sweeps; worst vertex {vertex} \
         still {depth:.3e} m short of clearance"
    )]
    PenetrationNotConverged { sweeps: usize, vertex: usize, depth: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("fracture segment {index} is rejected: {reason}")]
    Segment { index: usize, reason: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("incompatible source terms: net rate {net:e} m^2/s with no pressure control")]
    IncompatibleRates { net: f64 },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("flux graph contains a cycle through cell {cell}")]
    CyclicFlux { cell: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use num_complex::Complex64;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix `{which}` is not Hermitian (defect {defect:.3e})")]
    NotHermitian { which: String, defect: f64 },
    #[error("matrix `{which}` has non-finite entries")]
    NonFinite { which: String },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("eigensolver did not converge within {budget} iterations")]
    NoConvergence { budget: usize },
    #[error("z = {z} lies numerically in the spectrum (distance {distance:.3e})")]
    SpectrumHit { z: Complex64, distance: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bad ensemble spec: {0}")]
    BadSpec(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error in field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("coupling s = {s} collides with resonance {resonance} at z = {z}")]
    CouplingCollision {
        s: f64,
        z: Complex64,
        resonance: Complex64,
    },
    #[error("resonance counts differ between samples ({prev} vs {next})")]
    CardinalityMismatch { prev: usize, next: usize },
    #[error("continuation step collapsed near z = {at} (step {step:.3e})")]
    StepCollapse { at: Complex64, step: f64 },
    #[error("branch-point search left {} unresolved cells", cells.len())]
    DepthExceeded { cells: Vec<[f64; 4]> },
    #[error("log-log fit quality {quality:.3e} too poor after {decades} decades")]
    InsufficientDecades { decades: u32, quality: f64 },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

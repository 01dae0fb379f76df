use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no equilibrium roll angle within +-{guard_deg:.1} deg")]
    NoEquilibrium { guard_deg: f64 },
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("infeasible segment: {0}")]
    InfeasibleSegment(String),
    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("time {t} outside [{t0}, {tf}]")]
    OutOfRange { t: f64, t0: f64, tf: f64 },
    #[error("grid too large: {cells} cells exceeds limit {limit}")]
    GridTooLarge { cells: usize, limit: usize },
    #[error("simulation blow-up at t = {t:.3} s: |qdot| = {speed:.3e}")]
    BlowUp { t: f64, speed: f64 },
    #[error("empty log")]
    EmptyLog,
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("point ({u}, {v}) in chart {chart} cannot be assigned to any chart")]
    OutOfAtlas { chart: u8, u: f64, v: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("hamiltonian disagrees across chart overlaps by {0:e}")]
    InconsistentHamiltonian(f64),
    #[error("surgery zero sets overlap: {0}")]
    Overlap(String),
    #[error("surgery requires a Denjoy suspension base, got {0}")]
    WrongBase(String),
    #[error("step size underflow at t = {t} away from the declared singular set")]
    StiffnessAbort { t: f64 },
    #[error("section is not transverse to the field at {0} sample point(s)")]
    NotTransverse(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singular set is not finite: {0}")]
    InfiniteSingularSet(String),
    #[error("locally dense orbit found through ({u}, {v}) in chart {chart}")]
    LocallyDenseObstruction { chart: u8, u: f64, v: f64 },
    #[error("unresolved separatrix connection: {0}")]
    UnresolvedConnection(String),
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FlowError {
    fn from(e: std::io::Error) -> Self {
        FlowError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;

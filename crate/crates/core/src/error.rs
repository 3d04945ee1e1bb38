use thiserror::Error;

/// Errors shared across the simulation modules.
#[derive(Debug, Error)]
pub enum FppError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vertex {0:?} lies outside the region")]
    OutOfRegion(Vec<i64>),

    #[error("vertices {0:?} and {1:?} are not nearest neighbours")]
    NotAdjacent(Vec<i64>, Vec<i64>),

    #[error("vertex {0:?} is not interior to the region")]
    NotInterior(Vec<i64>),

    #[error("region has {vertices} vertices, exhaustive enumeration is capped at {cap}")]
    RegionTooLarge { vertices: usize, cap: usize },

    #[error("exact weight tie between edges {0} and {1}; continuous weight model violated")]
    ExactTie(usize, usize),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("infeasible placement geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("coexistence proxy does not hold, no witness family to extract")]
    ProxyFailed,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("corrupt environment file: {0}")]
    CorruptFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FppError>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("under-resolved: {0}")]
    Resolution(String),
    #[error("field clipped by grid edge: {0}")]
    Clipped(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("capacity exceeded: {modes} modes, limit {limit}")]
    Capacity { modes: usize, limit: usize },
    #[error("input supports overlap: modes {0} and {1}")]
    OverlappingSupports(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-injective pairing: {0}")]
    NonInjectivePairing(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("empty domain")]
    EmptyDomain,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("table not normalized (sum {0})")]
    NotNormalized(f64),
    #[error("LP{l}{m} mode is not guided at V = {v:.4}")]
    NotGuided { l: u32, m: u32, v: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable snake_case identifier of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Resolution(_) => "resolution",
            Error::Clipped(_) => "clipped",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidGeometry(_) => "invalid_geometry",
            Error::NotUnitary(_) => "not_unitary",
            Error::Capacity { .. } => "capacity",
            Error::OverlappingSupports(..) => "overlapping_supports",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonInjectivePairing(_) => "non_injective_pairing",
            Error::DomainMismatch(_) => "domain_mismatch",
            Error::EmptyDomain => "empty_domain",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::NotNormalized(_) => "not_normalized",
            Error::NotGuided { .. } => "not_guided",
            Error::Config(_) => "config",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

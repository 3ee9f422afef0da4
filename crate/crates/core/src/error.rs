use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported spacetime dimension {0} (expected 2 or 4)")]
    UnsupportedDimension(usize),
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid normal vector {0}")]
    InvalidNormal(String),
    #[error("matrix is not hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is indefinite (eigenvalue {0:e})")]
    Indefinite(f64),
    #[error("Lorentz matrix is not proper orthochronous: {0}")]
    NotProperOrthochronous(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("particle count mismatch: expected {expected}, found {found}")]
    ParticleCountMismatch { expected: usize, found: usize },
    #[error("masses differ between particles; (anti)symmetrization needs identical particles")]
    UnequalMasses,
    #[error("invalid plane-wave mode: {0}")]
    InvalidMode(String),
    #[error("configuration is not spacelike")]
    NotSpacelike,
    #[error("foliation profile violates the spacelike bound: sup|f'| = {0}")]
    NotSpacelikeProfile(f64),
    #[error("leaf label {0} outside the foliation slab")]
    OutsideSlab(f64),
    #[error("empty or invalid quadrature box")]
    EmptyBox,
    #[error("states are restricted to different surfaces")]
    SurfaceMismatch,
    #[error("support leaks out of the quadrature box (boundary mass fraction {0:e})")]
    SupportLeak(f64),
    #[error("state is not normalized on its leaf (norm² = {0})")]
    NotNormalized(f64),
    #[error("configuration near a node of the density (rho = {rho:e}, threshold {threshold:e})")]
    NodeEncounter { rho: f64, threshold: f64 },
    #[error("point is off the leaf (|leaf_of - s| = {0:e})")]
    OffLeaf(f64),
    #[error("normalization factor is not positive ({0:e})")]
    NonPositiveNormalization(f64),
    #[error("quadrature too coarse: trace {0} deviates from 1 by more than 5%")]
    QuadratureTooCoarse(f64),
    #[error("zero vector")]
    ZeroVector,
    #[error("environment point outside the quadrature box")]
    OutsideQuadratureBox,
    #[error("rejection sampler acceptance rate {0:e} below 1e-4")]
    LowAcceptance(f64),
    #[error("experiment invalid: {0}")]
    ExperimentInvalid(String),
    #[error("insufficient counts: {0}")]
    InsufficientCounts(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
}

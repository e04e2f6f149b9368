//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("multi-index {0:?} has order > 2 or wrong length")]
    BadMultiIndex(Vec<u32>),
    #[error("second-order coefficient for {0:?} has nonzero imaginary part {1:e}")]
    NonRealPrincipalPart(Vec<u32>, f64),
    #[error("operator is not elliptic: min Re eigenvalue of a^(2) is {0:e}")]
    NotElliptic(f64),
    #[error("fundamental solution evaluated at the origin")]
    EvalAtOrigin,
    #[error("unsupported fundamental-solution family: {0}")]
    UnsupportedFamily(String),
    #[error("bad shape parameters: {0}")]
    BadShapeParams(String),
    #[error("operation requires a density with an ambient closed form")]
    NeedsAmbientForm,
    #[error("node set is degenerate (all nodes coincide)")]
    DegenerateNodeSet,
    #[error("integrand is not finite at node {0}")]
    NonFiniteIntegrand(usize),
    #[error("weakly singular integration requires a log/smooth kernel split")]
    MissingSplit,
    #[error("singular 3d integration requires a declared singularity class")]
    MissingSingularityDeclaration,
    #[error("kernel value is not finite at sample ({0}, {1})")]
    NonFiniteKernelValue(usize, usize),
    #[error("unsupported dimension n = {0} (only 2 and 3)")]
    UnsupportedDimension(usize),
    #[error("rough densities are only supported on 2d geometries")]
    RoughDensityUnsupported,
    #[error("invalid experiment config: {0}")]
    BadConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

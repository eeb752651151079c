use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{nodes} sample nodes cannot resolve modes up to {modes} (need an odd count >= {})", 2 * .modes + 1)]
    Aliasing { nodes: usize, modes: usize },

    #[error("eigensolver residual {residual:e} at index {index} exceeds {tolerance:e}")]
    EigenResidual {
        index: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("fields are expressed in different spectral frames")]
    FrameMismatch,

    #[error("phase point cannot be classified: {0}")]
    Unclassifiable(String),

    #[error("no fake closed geodesic with |p(0)| = {p0} (must exceed rho1 = {rho1})")]
    NotFakeRegion { p0: f64, rho1: f64 },

    #[error("orbit is not contained in the thickening: {0}")]
    OutsideThickening(String),

    #[error("state is not critical: gradient norm {norm:e} > {tol:e}")]
    NotCritical { norm: f64, tol: f64 },

    #[error("flow step rejected after halving dt down to {dt:e}")]
    StepRejected { dt: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors surfaced by the geometry engine.
#[derive(Debug, Error)]
pub enum FinslerError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("parameter out of range: {0}")]
    ParameterRange(String),

    #[error("bad configuration: {0}")]
    Config(String),

    #[error("fundamental tensor not positive definite at x={x:?}, y={y:?} (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite {
        x: Vec<f64>,
        y: Vec<f64>,
        min_eig: f64,
    },

    #[error("tangent vector below guard radius (|y|_inf = {norm:.3e})")]
    GuardRadius { norm: f64 },

    #[error("point outside chart domain: {x:?}")]
    OutsideChart { x: Vec<f64> },

    #[error("jet depth exceeded: requested (kx={kx}, ky={ky}) but model supports (kx={max_kx}, ky={max_ky})")]
    JetDepth {
        kx: usize,
        ky: usize,
        max_kx: usize,
        max_ky: usize,
    },

    #[error("degenerate flag: {0}")]
    DegenerateFlag(String),

    #[error("ODE integration failed: {0}")]
    OdeFailure(String),

    #[error("shooting did not converge: {0}")]
    ShootingFailed(String),

    #[error("cut-locus ambiguity: {0}")]
    CutLocusAmbiguous(String),

    #[error("empty sample set: {0}")]
    EmptySample(String),

    #[error("certificate refused: {0}")]
    CertificateRefused(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, FinslerError>;

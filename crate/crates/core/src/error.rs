use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field does not live on the given grid")]
    GridMismatch,

    #[error("field is not flagged as zero on the boundary")]
    BoundaryFlagUnset,

    #[error("domain mask has an empty interior at h = {h}")]
    EmptyInterior { h: f64 },

    #[error("exponential overflow: u² = {max_usq:.6e} exceeds 700 at node {node}")]
    Overflow { node: usize, max_usq: f64 },

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("bubble under-resolved: r_k = {r_k:.6e} below 4h = {min_scale:.6e}; refine the grid")]
    UnderResolved { r_k: f64, min_scale: f64 },

    #[error("no sign change in bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("linear solver stalled: relative residual {residual:.3e} after {iters} iterations")]
    SolverStalled { residual: f64, iters: usize },

    #[error("constraint projection failed: {0}")]
    ProjectionFailed(String),

    #[error("root finder failed: {0}")]
    RootFindFailed(String),

    #[error("config: {0}")]
    Config(String),

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("velocity has zero speed")]
    NonPositiveSpeed,

    #[error("root search along ray failed: {0}")]
    RootNotBracketed(String),

    #[error("direction is not inward at the boundary point (u.n = {0})")]
    NotInward(f64),

    #[error("quadrature did not converge (estimate {estimate}, error {error})")]
    QuadratureNotConverged { estimate: f64, error: f64 },

    #[error("no communicating boundary patches found after {budget} sampled pairs")]
    PatchSearchFailed { budget: usize },

    #[error("explosion guard tripped after {0} collisions")]
    ExplosionGuardTripped(u64),

    #[error("residual rejection sampler exceeded {0} proposals")]
    ResidualRejectionBudgetExceeded(usize),

    #[error("lag {lag} exceeds the domain diameter {diameter}")]
    LagTooLarge { lag: f64, diameter: f64 },

    #[error("too few samples: {got} (need at least {need})")]
    TooFewSamples { got: usize, need: usize },

    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),

    #[error("moment integral diverges: {0}")]
    MomentDiverges(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pair {index}: {source}")]
    Pair {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

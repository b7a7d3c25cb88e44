use crate::geom3::Vec3;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("singular 3x3 system (|det| = {det:e}, tolerance {tol:e})")]
    SingularMatrix { det: f64, tol: f64 },

    #[error("filter `{function}` evaluated at a pole (argument {arg})")]
    FilterPole { function: &'static str, arg: f64 },

    #[error("magnetic field vanishes")]
    ZeroField,

    #[error("field model is singular at {x:?}")]
    DegenerateField { x: Vec3 },

    #[error("step size is near resonance: |sinc(k h |B| / 2)| = {value:e} for k = {k}")]
    NearResonant { k: u32, value: f64 },

    #[error("fixed-point iteration did not converge after {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("reference solver failed its step-halving check (discrepancy {discrepancy:e} > {tol:e})")]
    OracleNotConverged { discrepancy: f64, tol: f64 },

    #[error("{what} became non-finite")]
    NonFinite { what: &'static str },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("need at least {need} data points, got {got}")]
    InsufficientData { got: usize, need: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("step {step}: {source}")]
    Step {
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: u64) -> Self {
        match self {
            e @ Error::Step { .. } => e,
            e => Error::Step {
                step,
                source: Box::new(e),
            },
        }
    }

    /// The underlying error with any step annotation removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            e => e,
        }
    }
}

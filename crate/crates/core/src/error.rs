use thiserror::Error;

pub type Result<T, E = EgdError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EgdError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("densities live on different grids")]
    GridMismatch,
    #[error("mean action is zero; f(m) = 1/sqrt(|m|) is undefined")]
    DegenerateMean,
    #[error("utility value {value} at cell {cell} is negative; increase the shift")]
    ShiftTooSmall { cell: usize, value: f64 },
    #[error("utility value {value} at cell {cell} exceeds the declared bound {u_max}")]
    BoundExceeded { cell: usize, value: f64, u_max: f64 },
    #[error("utility `{utility}` does not apply here: {reason}")]
    UtilityMismatch { utility: String, reason: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("no multiplier satisfies the cost constraint: {0}")]
    NoSolution(String),
    #[error("bracket [{lo}, {hi}] does not straddle the target")]
    BracketError { lo: f64, hi: f64 },
    #[error("time step too large: cell {cell} would receive mass {mass:e}")]
    TimestepTooLarge { cell: usize, mass: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<EgdError>,
    },
    #[error("no cell carries more than the support threshold")]
    EmptySupport,
    #[error("convergence rate is infinite (current error is zero)")]
    InfiniteRate,
    #[error("runs cannot be compared: {0}")]
    IncompatibleRuns(String),
}

impl EgdError {
    pub(crate) fn at_step(self, step: usize) -> Self {
        EgdError::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Strips any step annotation.
    pub fn root(&self) -> &EgdError {
        match self {
            EgdError::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

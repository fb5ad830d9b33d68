//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model construction, solvers, and calibration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// No feasible assignment exists under the given constraints.
    #[error("infeasible: minimum achievable power {min_power} exceeds budget {budget}")]
    Infeasible {
        /// Power drawn by the fastest-allowed (most relaxed) assignment.
        min_power: f64,
        /// The budget that assignment already exceeds.
        budget: f64,
    },

    /// A requested fidelity target lies below the model's floor.
    #[error("unreachable fidelity: target MSE {target} is below the minimum achievable MSE {min_mse}")]
    UnreachableFidelity {
        /// The requested MSE target.
        target: f64,
        /// The smallest MSE the device can reach.
        min_mse: f64,
    },

    /// An iterative method exhausted its iteration budget.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// Not enough (or degenerate) data to fit a model.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A fit produced parameters that contradict the physical model.
    #[error("non-physical fit: beta = {beta}; bit error rate must grow with the refresh interval")]
    NonPhysicalFit {
        /// The fitted (non-positive) exponential rate.
        beta: f64,
    },

    /// An exhaustive procedure was asked to run beyond its size guard.
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// Measurement file could not be read or parsed.
    #[error("measurement input: {0}")]
    MeasurementInput(String),

    /// An underlying I/O operation failed.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

use thiserror::Error;

/// Errors raised by the model, estimators and interval constructions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapeError {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A standing model assumption does not hold for the supplied rates.
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// Survey counts are inconsistent (cells do not add up, sample is empty, ...).
    #[error("invalid counts: {0}")]
    InvalidCounts(String),

    /// The likelihood cannot be maximized: an observed cell has zero
    /// probability for every admissible prevalence, or the likelihood is flat.
    #[error("degenerate likelihood: {0}")]
    DegenerateLikelihood(String),

    /// The moment condition of a cell does not depend on the prevalence.
    #[error("degenerate cell {cell}: its expected frequency does not depend on the prevalence")]
    DegenerateCell { cell: usize },

    /// Clamping an interval to the admissible range left nothing.
    #[error("empty interval after clamping: [{lower}, {upper}]")]
    EmptyInterval { lower: f64, upper: f64 },

    /// The estimate sits on the boundary of the parameter space, where
    /// asymptotic normality does not hold.
    #[error("estimate {point} lies on the boundary of the admissible range")]
    BoundaryEstimate { point: f64 },

    /// The worker pool could not be set up.
    #[error("execution error: {0}")]
    Execution(String),

    /// The estimate carries no Fisher information.
    #[error("no Fisher information available for {0}")]
    MissingInformation(String),
}

impl CapeError {
    /// True for failures caused by the data rather than by bad inputs.
    pub fn is_computational(&self) -> bool {
        matches!(
            self,
            CapeError::DegenerateLikelihood(_)
                | CapeError::DegenerateCell { .. }
                | CapeError::EmptyInterval { .. }
                | CapeError::BoundaryEstimate { .. }
                | CapeError::MissingInformation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CapeError>;

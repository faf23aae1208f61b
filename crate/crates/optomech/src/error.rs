use thiserror::Error;

/// Workbench error taxonomy. The CLI maps these onto process exit codes:
/// validation/config problems exit 2, physics-domain conditions (poles,
/// resonances, degeneracies, singular integrals) exit 3, fit or iteration
/// failures exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("basis dimension {requested} exceeds limit {limit}")]
    Capacity { requested: usize, limit: usize },

    #[error("operator is not Hermitian (max deviation {defect:.3e})")]
    NonHermitian { defect: f64 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error(
        "state tracking failed for {label}: best overlap^2 {overlap:.4} is below 0.5"
    )]
    StrongMixing { label: String, overlap: f64 },

    #[error("degenerate levels: {0}")]
    Degenerate(String),

    #[error("denominator {denominator:.3e} inside pole guard {guard:.3e} in {context}")]
    PoleGuard {
        denominator: f64,
        guard: f64,
        context: String,
    },

    #[error("resonance tuning required: {0}")]
    ResonanceRequired(String),

    #[error("singular integral: {0}")]
    SingularIntegral(String),

    #[error("inconsistent constraint: {0}")]
    Constraint(String),

    #[error("fit failed: {0}")]
    Convergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Machine-readable kind tag carried into reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Capacity { .. } => "capacity",
            Error::NonHermitian { .. } => "non-hermitian",
            Error::BasisMismatch(_) => "basis-mismatch",
            Error::StrongMixing { .. } => "strong-mixing",
            Error::Degenerate(_) => "degenerate",
            Error::PoleGuard { .. } => "pole-guard",
            Error::ResonanceRequired(_) => "resonance-required",
            Error::SingularIntegral(_) => "singular-integral",
            Error::Constraint(_) => "inconsistent-constraint",
            Error::Convergence(_) => "convergence",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config(_) | Error::Io(_) => 2,
            Error::Convergence(_) => 4,
            _ => 3,
        }
    }
}

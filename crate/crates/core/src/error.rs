use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped by the module that raises them; [`Error::kind`]
/// maps them onto the coarse categories the CLI turns into exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // matkernel
    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NonHermitian { asymmetry: f64 },
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    // model
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("state norm drifted to {norm:.12} (expected 1)")]
    NormDrift { norm: f64 },
    #[error("SLD Fisher matrix is singular (min eigenvalue {min_eigenvalue:.3e})")]
    SingularFisher { min_eigenvalue: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("Fock truncation failed: tail mass {tail:.3e} at dimension {dim}")]
    Truncation { dim: usize, tail: f64 },
    #[error("schema error: {0}")]
    Schema(String),

    // analysis
    #[error("model is not coherent at this point")]
    NotCoherent,
    #[error("weight matrix is not positive definite")]
    SingularWeight,

    // measurement
    #[error("model is not quasi-classical at this point")]
    NotQuasiClassical,
    #[error("estimation vectors cannot be completed: residual {residual:.3e}")]
    InfeasibleGram { residual: f64 },
    #[error("estimation vectors do not commute: max |Im X*X| = {residual:.3e}")]
    NotCommuting { residual: f64 },
    #[error("estimation vectors are degenerate: {0}")]
    DegenerateVectors(String),
    #[error("negative outcome probability {0:.3e}")]
    BadProbability(f64),
    #[error("precondition not met: {0}")]
    PreconditionNotMet(String),
    #[error("Gram matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    GramNotPsd { min_eigenvalue: f64 },

    // oracle
    #[error("oracle found no feasible point (best residual {best_residual:.3e})")]
    Infeasible { best_residual: f64 },
    #[error("oracle did not converge: {0}")]
    NonConvergence(String),

    // cli dispatch
    #[error("not supported: {0}")]
    NotSupported(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse grouping of [`Error`] variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    SchemaOrDomain,
    Model,
    Oracle,
    Unsupported,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Schema(_) | Domain(_) | DimensionMismatch(_) | Io(_) => ErrorKind::SchemaOrDomain,
            Infeasible { .. } | NonConvergence(_) => ErrorKind::Oracle,
            NotSupported(_) => ErrorKind::Unsupported,
            _ => ErrorKind::Model,
        }
    }

    /// Short machine-readable name used in error JSON.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            NonHermitian { .. } => "NonHermitian",
            NonFinite => "NonFinite",
            NotPsd { .. } => "NotPSD",
            DimensionMismatch(_) => "DimensionMismatch",
            DegenerateModel(_) => "DegenerateModel",
            NormDrift { .. } => "NormDrift",
            SingularFisher { .. } => "SingularFisher",
            Domain(_) => "DomainError",
            Truncation { .. } => "TruncationError",
            Schema(_) => "SchemaError",
            NotCoherent => "NotCoherent",
            SingularWeight => "SingularWeight",
            NotQuasiClassical => "NotQuasiClassical",
            InfeasibleGram { .. } => "InfeasibleGram",
            NotCommuting { .. } => "NotCommuting",
            DegenerateVectors(_) => "DegenerateVectors",
            BadProbability(_) => "BadProbability",
            PreconditionNotMet(_) => "PreconditionNotMet",
            GramNotPsd { .. } => "GramNotPSD",
            Infeasible { .. } => "Infeasible",
            NonConvergence(_) => "NonConvergence",
            NotSupported(_) => "NotSupported",
            Io(_) => "IoError",
        }
    }
}

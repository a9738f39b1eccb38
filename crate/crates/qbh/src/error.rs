use thiserror::Error;

/// Errors produced by model construction and the numerical pipelines.
#[derive(Debug, Error)]
pub enum QbhError {
    /// A model parameter violates its domain; the message names the constraint.
    #[error("{model}: {constraint}")]
    ParamDomain { model: String, constraint: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Spectral singularity (exceptional point, Krein collision, or complex
    /// spectrum) where a regular point was required.
    #[error("spectral singularity ({kind}) at k = {k:?}")]
    SingularPoint { k: Vec<f64>, kind: &'static str },

    /// A discrete ring momentum `k_j = 2 pi j / N` hit a singular point.
    #[error("singular discrete momentum j = {index} (k = {k})")]
    SingularMomentum { index: usize, k: f64 },

    #[error("eigensolver failed at k = {k:?}")]
    EigenFailure { k: Vec<f64> },

    /// Ring spectrum unusable for a vacuum covariance (complex eigenvalues,
    /// non-normalizable eigenvectors, or a closed finite-spectrum gap).
    #[error("unstable ring spectrum: {0}")]
    UnstableRing(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("model file: {0}")]
    ModelFile(String),
}

pub type Result<T> = std::result::Result<T, QbhError>;

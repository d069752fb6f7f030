use thiserror::Error;

/// Errors produced by graph construction, problem setup, the solvers and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension { what: &'static str, expected: usize, got: usize },

    #[error("no connected Erdős–Rényi sample after {attempts} draws (edge probability {edge_prob} too small?)")]
    DisconnectedGraph { attempts: usize, edge_prob: f64 },

    #[error("graph violates the communication assumptions: {0}")]
    InvalidGraph(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("spectral radius {0} is not below 1")]
    Unstable(f64),

    #[error("non-finite value at iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: String },

    #[error("iterates diverged at iteration {iteration} (|x| = {norm:e})")]
    Diverged { iteration: usize, norm: f64 },

    #[error("problem does not provide analytic gradients")]
    MissingGradients,

    #[error("replica with seed {seed} aborted: {source}")]
    Replica {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("trace parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical process itself (as opposed to bad
    /// configuration or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite { .. } | Error::Diverged { .. } => true,
            Error::Replica { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

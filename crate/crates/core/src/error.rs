use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integration diverged at state {state:?}")]
    IntegrationDiverged { state: Vec<f64> },

    #[error("insufficient data: wanted {wanted} in-domain snapshots, obtained {obtained}")]
    InsufficientData { wanted: usize, obtained: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient at tape node {node} ({op})")]
    GradientOverflow { node: usize, op: &'static str },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("falsifier soundness violation: counterexample re-evaluates with margin {margin:e}")]
    Soundness { margin: f64 },

    #[error("re-verification of the final checkpoint gave a different certificate")]
    CertificateMismatch,

    #[error("unknown plant `{0}` (valid plants: pendulum, vanderpol, cartpole, hcw)")]
    UnknownPlant(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint has no UNSAT certificate (pass --force to simulate anyway)")]
    MissingCertificate,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}

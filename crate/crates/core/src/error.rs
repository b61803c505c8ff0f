use thiserror::Error;

/// Errors produced by model construction, classification, simulation and
/// the lattice/centre-of-mass tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state (x={x}, line={line}) is outside the model domain: {reason}")]
    Domain { x: f64, line: usize, reason: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix is reducible: states {unreachable:?} cannot be reached from state {from}")]
    Reducible { from: usize, unreachable: Vec<usize> },

    #[error("not in critical regime: sum d_i pi_i = {drift:e} (use the constant-drift classification)")]
    NotCritical { drift: f64 },

    #[error("ill-posed profile: {0}")]
    IllPosed(String),

    #[error("degenerate variance: V = {0:e}")]
    DegenerateVariance(f64),

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("insufficient data: got {got}, need at least {need}")]
    InsufficientData { got: usize, need: usize },

    #[error("sample off lattice at n={n}: lattice coordinates {coords:?}")]
    OffLattice { n: u64, coords: Vec<f64> },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("schema error in field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("path {path}, step {step}: {source}")]
    Simulation {
        path: usize,
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{task} task: {source}")]
    Task {
        task: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input files rather than numerics.
    pub fn is_schema(&self) -> bool {
        match self {
            Error::Schema { .. } | Error::Json(_) => true,
            Error::Task { source, .. } | Error::Simulation { source, .. } => source.is_schema(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A user-facing parameter failed validation. `field` is the config key.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("vertices {0} and {1} share a position; edge weights are undefined on the diagonal")]
    DuplicatePosition(usize, usize),

    #[error("step rejected at dt = {dt}: vertex {vertex} would hold mass {mass:e}")]
    StepRejected { dt: f64, vertex: usize, mass: f64 },

    #[error("flux is not antisymmetric on edge ({i}, {j})")]
    NotAntisymmetric { i: usize, j: usize },

    #[error("target divergence is infeasible: vertex {vertex} sits in a set with net outflow {excess:e} and no admissible exit ({closed_set:?})")]
    InfeasibleDivergence { vertex: usize, excess: f64, closed_set: Vec<usize> },

    #[error("{what} is limited to n <= {limit}, got n = {n}")]
    TooLarge { what: &'static str, limit: usize, n: usize },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("{0} did not converge")]
    NotConverged(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Invalid { field, reason: reason.into() }
}

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("edge {to} <- {from} references a vertex outside 0..{n}")]
    VertexOutOfRange { to: usize, from: usize, n: usize },
    #[error("self loop on vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {to} <- {from}")]
    DuplicateEdge { to: usize, from: usize },
    #[error("edge {to} <- {from}: {reason}")]
    BadEdge { to: usize, from: usize, reason: &'static str },
    #[error("agent {0} has more than one leader link")]
    DuplicateLeaderLink(usize),
    #[error("leader link to agent {agent}: {reason}")]
    BadLeaderLink { agent: usize, reason: &'static str },
    #[error("graph does not contain a spanning tree (zero eigenvalue is not simple)")]
    NoSpanningTree,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid manipulator parameters {a:?}: {reason}")]
    InvalidParams { a: Vec<f64>, reason: &'static str },
    #[error("inertia matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("degrees of freedom must be >= 1")]
    ZeroDof,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("delay {delay} s is not an integer multiple of the step {dt} s")]
    NonCommensurateDelay { delay: f64, dt: f64 },
    #[error("invalid step {0}: must be finite and > 0")]
    BadStep(f64),
    #[error("invalid delay {0}: must be finite and >= 0")]
    BadDelay(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GainError {
    #[error("{name} must be {dim}x{dim}, got {rows}x{cols}")]
    Shape { name: &'static str, dim: usize, rows: usize, cols: usize },
    #[error("{0} is not symmetric")]
    NotSymmetric(&'static str),
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("scalar gain k must be finite and > 0, got {0}")]
    NonPositiveScalar(f64),
}

/// One problem found while validating a scenario, tagged with its location.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("{location}: no spanning tree")]
    NoSpanningTree { location: String },
    #[error("{location}: {source}")]
    NonCommensurateDelay { location: String, source: DelayError },
    #[error("{location}: {source}")]
    BadGain { location: String, source: GainError },
    #[error("{location}: {detail}")]
    DimensionMismatch { location: String, detail: String },
    #[error("{location}: {detail}")]
    Invalid { location: String, detail: String },
}

/// A collection of validation problems.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("scenario failed validation with {} error(s): {}", .0.len(), join(.0))]
pub struct ValidationErrors(pub Vec<ValidationError>);

fn join(errors: &[ValidationError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

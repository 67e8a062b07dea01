use std::fmt;

use thiserror::Error;

/// Structural assumptions a trait-graph model must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    PositiveBirth,
    NonNegativeDeath,
    NonNegativeCompetition,
    PositiveSelfCompetition,
    NoSelfMutation,
    KernelMatchesEdges,
    KernelNormalised,
    NonIntegerAlpha,
    PositiveAlpha,
    NonZeroFitness,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::PositiveBirth => "birth rates b(v) > 0",
            Assumption::NonNegativeDeath => "death rates d(v) >= 0",
            Assumption::NonNegativeCompetition => "competition c(v,w) >= 0",
            Assumption::PositiveSelfCompetition => "self-competition c(v,v) > 0",
            Assumption::NoSelfMutation => "no self-mutation, m(v,v) = 0",
            Assumption::KernelMatchesEdges => "m(v,w) > 0 exactly on graph edges",
            Assumption::KernelNormalised => "mutation kernel sums to 1 on vertices with out-edges",
            Assumption::NonIntegerAlpha => "alpha is not an integer",
            Assumption::PositiveAlpha => "alpha > 0",
            Assumption::NonZeroFitness => "invasion fitness f(w,v) != 0 for non-residents",
        };
        f.write_str(s)
    }
}

/// Errors raised while loading or validating a model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("cannot parse model document: {0}")]
    Parse(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("vertex `{0}` declared twice")]
    DuplicateVertex(String),
    #[error("edge {from} -> {to} declared twice")]
    DuplicateEdge { from: String, to: String },
    #[error("missing {field} for vertex `{vertex}`")]
    MissingParameter { field: &'static str, vertex: String },
    #[error("model assumption violated ({assumption}): {detail}")]
    Assumption { assumption: Assumption, detail: String },
}

impl ModelError {
    pub(crate) fn assumption(assumption: Assumption, detail: impl Into<String>) -> Self {
        ModelError::Assumption { assumption, detail: detail.into() }
    }
}

/// Errors raised by the analysis operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("resident set is empty")]
    EmptyResidents,
    #[error("vertex index {0} out of range")]
    VertexOutOfRange(usize),
    #[error("model assumption violated ({}): f({trait_label}, {resident}) = {value:e} is numerically zero", Assumption::NonZeroFitness)]
    ZeroFitness { trait_label: String, resident: String, value: f64 },
    #[error("{target} is unreachable from {source_set}")]
    Unreachable { source_set: String, target: String },
    #[error("{resident} cannot coexist: {reason}")]
    NoCoexistence { resident: String, reason: String },
    #[error("{resident} is not an ESC: {reason}")]
    NotAnEsc { resident: String, reason: String },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("excursion parameter rho = {0} is not in (0, 1/2)")]
    Supercritical(f64),
    #[error("ODE flow blew up at t = {time} (density {value:e})")]
    FlowBlowUp { time: f64, value: f64 },
    #[error("{0}")]
    AssumptionFailed(String),
}

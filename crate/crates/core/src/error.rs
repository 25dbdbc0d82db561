use thiserror::Error;

use crate::ot::TransportPlan;

#[derive(Debug, Error)]
pub enum Error {
    #[error("document has no sentence with at least one usable token")]
    EmptyDocument,

    #[error("embedding vocabulary is empty")]
    EmptyVocabulary,

    #[error("every sentence distribution is the zero vector")]
    AllSentencesEmpty,

    #[error("extraction vector selects no sentence")]
    EmptySelection,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("token `{0}` has no embedding")]
    MissingToken(String),

    #[error("token `{0}` has a zero-norm embedding; cosine cost is undefined")]
    ZeroNormVector(String),

    #[error("infeasible marginals: {0}")]
    InfeasibleMarginals(String),

    #[error("sinkhorn stopped after {iterations} iterations with marginal violation {violation:e}")]
    NonConvergence {
        iterations: usize,
        violation: f64,
        plan: Box<TransportPlan>,
    },

    #[error("exact solver exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("transport plan carries no dual potentials")]
    MissingDuals,

    #[error("no reference for document `{0}`")]
    MissingReference(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable variant name for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyDocument => "EmptyDocument",
            Error::EmptyVocabulary => "EmptyVocabulary",
            Error::AllSentencesEmpty => "AllSentencesEmpty",
            Error::EmptySelection => "EmptySelection",
            Error::Parse { .. } => "Parse",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::MissingToken(_) => "MissingToken",
            Error::ZeroNormVector(_) => "ZeroNormVector",
            Error::InfeasibleMarginals(_) => "InfeasibleMarginals",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::PivotLimit(_) => "PivotLimit",
            Error::MissingDuals => "MissingDuals",
            Error::MissingReference(_) => "MissingReference",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

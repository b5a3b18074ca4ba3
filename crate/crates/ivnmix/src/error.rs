//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // network validation
    #[error("network contains a directed cycle")]
    CycleDetected,
    #[error("CPT row {row} of node {node} does not sum to 1 (sum = {sum})")]
    RowSumViolation { node: usize, row: usize, sum: f64 },
    #[error("CPT of node {0} has the wrong shape for its parents/categories")]
    ArityMismatch(usize),
    #[error("node {0} references a parent that does not exist")]
    DanglingParent(usize),
    #[error("node {node} has an invalid category list")]
    BadCategories { node: usize },
    #[error("assignment does not cover every node")]
    PartialAssignment,
    #[error("assignment value out of range for node {0}")]
    ValueOutOfRange(usize),

    // parsing / serialization
    #[error("BIF syntax error at line {line}: expected {expected}")]
    Syntax { line: usize, expected: String },
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("probability table for `{0}` has the wrong shape")]
    TableShapeMismatch(String),
    #[error("schema error at {0}")]
    Schema(String),
    #[error("field `{field}` out of range: {detail}")]
    Range { field: String, detail: String },

    // interventions and mixtures
    #[error("invalid intervention target")]
    InvalidIntervention,
    #[error("mixture spec has a negative proportion")]
    NegativeProportion,
    #[error("mixture proportions sum to {0}, expected 1")]
    SumNotOne(f64),
    #[error("requested {requested} interventions but only {available} eligible pairs")]
    TooManyInterventions { requested: usize, available: usize },
    #[error("oracle bundle is missing the table for a component")]
    MissingComponent,
    #[error("oracle bundle is missing a marginal entry")]
    MissingMarginal,
    #[error("empty sample set")]
    EmptySampleSet,

    // exact recovery
    #[error("degenerate pivot at node {0}: base marginal below 1e-12")]
    DegeneratePivot(usize),
    #[error("no nonnegative candidate at node {0}")]
    NoNonnegativeCandidate(usize),
    #[error("ambiguous candidates at node {node}: {candidates:?}")]
    AmbiguousCandidates {
        node: usize,
        candidates: Vec<Vec<f64>>,
    },

    // optimization / EM
    #[error("vector does not match the problem's variable layout")]
    LayoutMismatch,
    #[error("solver exhausted its budget with constraint violation {violation}")]
    Diverged { violation: f64 },
    #[error("sample {0} has zero likelihood under every active component")]
    ZeroDenominator(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

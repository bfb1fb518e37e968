//! Crate-wide error type.

use thiserror::Error;

use crate::game::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or callback broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Game data failed validation at construction time.
    #[error("invalid game: {} violation(s), first: {}", violations.len(),
            violations.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidGame { violations: Vec<Violation> },

    #[error("unknown builtin game {0:?}")]
    UnknownBuiltin(String),

    /// Simplex hit the pivot cap without reaching optimality.
    #[error("lp stalled after {pivots} pivots")]
    LpStalled { pivots: u64 },

    /// A solve that must succeed by construction did not, or its solution
    /// failed the residual check.
    #[error("lp numeric failure: {0}")]
    LpNumeric(String),

    /// The CCE oracle could not produce a joint distribution within
    /// tolerance. Theoretically impossible for finite inputs, so this
    /// signals a numerical breakdown.
    #[error("cce infeasible beyond tolerance: {0}")]
    CceInfeasible(String),

    #[error("metrics stream unusable: {0}")]
    Metrics(String),

    #[error("malformed episode log: {0}")]
    MalformedLog(String),

    #[error("evaluation budget exceeded: work {work} > budget {budget}; {hint}")]
    BudgetExceeded { work: u64, budget: u64, hint: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("eigensolver did not converge (n = {n}, frobenius norm = {norm:e})")]
    NoConvergence { n: usize, norm: f64 },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("invalid graph: {0}")]
    Graph(String),

    /// A theorem hypothesis required by the requested synthesis mode is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The LMI solver ran out of budget without finding a strictly feasible point.
    /// This is never a certificate of infeasibility.
    #[error("LMI infeasible within budget (best margin {best_margin:e})")]
    InfeasibleWithinBudget { best_margin: f64 },

    #[error("simulation blew up at t = {t} (|x| = {norm:e}); last valid time {last_valid_t}")]
    BlowUp { t: f64, last_valid_t: f64, norm: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    Invalid(String),
}

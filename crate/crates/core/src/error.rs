use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {field}: expected {expected}, got {got}")]
    Dimension {
        field: String,
        expected: String,
        got: String,
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("degenerate working set {0}: active constraint rows are linearly dependent")]
    DegenerateWorkingSet(String),
    #[error("reduced Hessian is singular for working set {0}")]
    SingularReducedHessian(String),
    #[error("no parent factorization available for singular working set {0}")]
    NoParentFactorization(String),
    #[error("infeasible start: {0}")]
    InfeasibleStart(String),
    #[error("iteration cap {0} exceeded (possible cycling or cap too low)")]
    IterationCap(usize),
    #[error("cannot bound quadratic term: {0}")]
    UnboundedRegion(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("LP subproblem failed: {0}")]
    Lp(String),
    #[error("external oracle: {0}")]
    Oracle(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(field: &str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        field: field.to_string(),
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

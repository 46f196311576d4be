use crate::expr::{EvalError, ParseDiagnostic};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseDiagnostic),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("evaluation failed at x = {x:?}, v = {v:?}: {source}")]
    EvalAt {
        source: EvalError,
        x: Vec<f64>,
        v: Vec<f64>,
    },
    #[error("undefined on the zero section (v = 0)")]
    ZeroVector,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("singular {what} at x = {x:?}")]
    Singular { what: &'static str, x: Vec<f64> },
    #[error("point {x:?} lies outside the chart box")]
    OutsideChart { x: Vec<f64> },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("ill-conditioned commutant (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },
}

impl Error {
    pub(crate) fn eval_at(source: EvalError, x: &[f64], v: &[f64]) -> Self {
        Error::EvalAt {
            source,
            x: x.to_vec(),
            v: v.to_vec(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

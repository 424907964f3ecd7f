use thiserror::Error;

/// Errors raised anywhere in the simulation stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("model document syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("kinematic cycle detected at joint {0}")]
    Cycle(usize),
    #[error("joint {joint} references missing parent {parent}")]
    DanglingParent { joint: usize, parent: i64 },
    #[error("unknown joint kind `{0}`")]
    UnknownJointKind(String),
    #[error("non-physical model: {0}")]
    NonPhysical(String),
    #[error("invalid parameter binding: {0}")]
    Binding(String),

    #[error("singular articulated inertia at body {body} (D = {value:e})")]
    SingularInertia { body: usize, value: f64 },

    #[error("evaluation budget of {0} rhs calls exceeded")]
    EvalBudget(u64),
    #[error("step size underflow at t = {t}: required step {step:e} below minimum")]
    StepUnderflow { t: f64, step: f64 },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),

    #[error("a tape session is already active on this thread")]
    TapeBusy,
    #[error("tape memory budget of {0} variables exceeded")]
    TapeBudget(usize),

    #[error("invalid gradient request: {0}")]
    Request(String),
    #[error("line search failed after {iterations} iterations (loss {loss:e})")]
    LineSearch { iterations: usize, loss: f64 },
    #[error("unsupported topology: {0}")]
    Topology(String),
    #[error("trajectory optimization failed: {0}")]
    Control(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

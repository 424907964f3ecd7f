use thiserror::Error;

/// Failure of a harness command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("simulation diverged: {0}")]
    Divergence(String),
}

impl HarnessError {
    /// 0 success, 1 I/O or configuration, 2 optimization, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io(_) | HarnessError::Config(_) => 1,
            HarnessError::Optimization(_) => 2,
            HarnessError::Divergence(_) => 3,
        }
    }
}

impl From<diffsim::Error> for HarnessError {
    fn from(e: diffsim::Error) -> Self {
        use diffsim::Error as E;
        match e {
            E::Io(m) => HarnessError::Io(m),
            E::NonFinite(_) | E::SingularInertia { .. } | E::StepUnderflow { .. } | E::EvalBudget(_) => {
                HarnessError::Divergence(e.to_string())
            }
            E::LineSearch { .. } | E::Control(_) | E::TapeBudget(_) | E::TapeBusy => HarnessError::Optimization(e.to_string()),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

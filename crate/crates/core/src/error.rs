use thiserror::Error;

/// Errors produced by the simulator, the autodiff engine and the training loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("exhaustive search refused: {candidates} candidates exceed budget {budget}")]
    BudgetExceeded { candidates: f64, budget: u64 },

    #[error("training diverged at epoch {epoch}, instance {instance} (loss {value})")]
    NonFinite { epoch: usize, instance: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GpmeError>;

#[derive(Debug, Error)]
pub enum GpmeError {
    /// Input outside the mathematical domain of a function (e.g. `p <= 0` for superslow).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed call arguments (wrong lengths, non-nested grids, bad order).
    #[error("argument error: {0}")]
    Argument(String),

    /// Invalid run or problem configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// NaN, overflow or an inadmissible state produced during a run.
    #[error("numerical failure{}{}{}: {message}",
        step.map(|s| format!(" at step {s}")).unwrap_or_default(),
        node.map(|n| format!(" at node {n}")).unwrap_or_default(),
        time.map(|t| format!(" (t = {t})")).unwrap_or_default())]
    Numerical {
        step: Option<usize>,
        node: Option<usize>,
        time: Option<f64>,
        message: String,
    },

    #[error("Picard iteration did not converge after {iterations} iterations (last update {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GpmeError {
    pub(crate) fn numerical(node: Option<usize>, message: impl Into<String>) -> Self {
        GpmeError::Numerical {
            step: None,
            node,
            time: None,
            message: message.into(),
        }
    }

    /// Attach step/time context to a numerical failure raised inside a single step.
    pub(crate) fn at_step(self, step_index: usize, t: f64) -> Self {
        match self {
            GpmeError::Numerical {
                node,
                message,
                step: None,
                ..
            } => GpmeError::Numerical {
                step: Some(step_index),
                node,
                time: Some(t),
                message,
            },
            other => other,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            GpmeError::Numerical { .. } | GpmeError::NonConvergence { .. } => 3,
            GpmeError::Io(_) => 1,
            _ => 2,
        }
    }
}

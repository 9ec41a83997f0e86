use thiserror::Error;

/// Errors raised by model construction, solvers and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violates one of its invariants. `path` names the offending
    /// field, e.g. `sensors[1].target_pd`.
    #[error("{path}: {reason}")]
    InvalidParameter { path: String, reason: String },

    #[error("index out of range: {what} = {value} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("battery chain construction failed: {0}")]
    ChainConstruction(String),

    #[error("numerical failure in {context}: {detail}")]
    Numerical {
        context: &'static str,
        detail: String,
    },

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("no feasible point (minimum average power reached {min_power_w:.6e} W)")]
    Infeasible { min_power_w: f64 },
}

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            detail: detail.into(),
        }
    }

    /// Prefix the parameter path, used when a nested value is validated on
    /// behalf of its container.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            Error::InvalidParameter { path, reason } => Error::InvalidParameter {
                path: if path.is_empty() {
                    prefix.to_string()
                } else {
                    format!("{prefix}.{path}")
                },
                reason,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

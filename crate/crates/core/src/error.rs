use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlmcError {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A basis or measure could not be constructed from its parameters.
    #[error("construction error: {0}")]
    Construction(String),

    /// The Gram matrix could not be factorised even after the jitter was applied.
    #[error("basis conditioning failure: min eigenvalue {min_eigenvalue:e} (max {max_eigenvalue:e})")]
    Conditioning {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    /// The requested strategy or capability is not available for this pairing.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// A model does not expose a capability an operation needs.
    #[error("capability error: {0}")]
    Capability(String),

    /// A non-finite regression target.
    #[error("data error: non-finite value {value} at index {index}")]
    Data { index: usize, value: f64 },

    /// A numerical failure, located by module, time index and sample index where known.
    #[error("numerical error in {module} (n={n:?}, m={m:?}): {detail}")]
    Numerical {
        module: &'static str,
        n: Option<usize>,
        m: Option<usize>,
        detail: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl RlmcError {
    pub(crate) fn numerical(module: &'static str, detail: impl Into<String>) -> Self {
        RlmcError::Numerical {
            module,
            n: None,
            m: None,
            detail: detail.into(),
        }
    }

    /// Attach a time index and sample index to a numerical error, keeping any already set.
    pub fn at(self, module: &'static str, n: usize, m: Option<usize>) -> Self {
        match self {
            RlmcError::Numerical {
                module: old,
                n: old_n,
                m: old_m,
                detail,
            } => RlmcError::Numerical {
                module: old,
                n: old_n.or(Some(n)),
                m: old_m.or(m),
                detail,
            },
            RlmcError::Data { index, value } => RlmcError::Numerical {
                module,
                n: Some(n),
                m: Some(index),
                detail: format!("non-finite regression target {value}"),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for RlmcError {
    fn from(e: std::io::Error) -> Self {
        RlmcError::Io(e.to_string())
    }
}

impl From<csv::Error> for RlmcError {
    fn from(e: csv::Error) -> Self {
        RlmcError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RlmcError {
    fn from(e: serde_json::Error) -> Self {
        RlmcError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, RlmcError>;

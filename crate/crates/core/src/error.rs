use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model code `{code}`; expected one of {valid}")]
    InvalidModelCode { code: String, valid: String },

    #[error("model {0} is named in the family but has no M-step in this library")]
    UnsupportedModel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular covariance{}: {detail}", component.map(|k| format!(" in component {}", k + 1)).unwrap_or_default())]
    Singular {
        component: Option<usize>,
        detail: String,
    },

    #[error("all {restarts} EM chains failed for {model} with K={k} (last: {last}); consider fitting with a prior")]
    AllChainsFailed {
        model: String,
        k: usize,
        restarts: usize,
        last: String,
    },

    #[error("bootstrap failed: {failed} of {nboot} replicates could not be fitted")]
    BootstrapFragile { failed: usize, nboot: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn singular(component: Option<usize>, detail: impl Into<String>) -> Self {
        Error::Singular {
            component,
            detail: detail.into(),
        }
    }

    /// True for failures of the numerical procedure itself, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::AllChainsFailed { .. } | Error::BootstrapFragile { .. }
        )
    }

    /// Short machine-parseable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidModelCode { .. } => "E_MODEL_CODE",
            Error::UnsupportedModel(_) => "E_UNSUPPORTED_MODEL",
            Error::DimensionMismatch(_) => "E_DIMENSION",
            Error::InvalidArgument(_) => "E_ARGUMENT",
            Error::Singular { .. } => "E_SINGULAR",
            Error::AllChainsFailed { .. } => "E_EM_FAILED",
            Error::BootstrapFragile { .. } => "E_BOOTSTRAP",
            Error::Data(_) => "E_DATA",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::Csv(_) => "E_CSV",
        }
    }
}

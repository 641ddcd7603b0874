use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("`{0}` not found")]
    NotFound(String),
    #[error("external geocoder unavailable: {0}")]
    ExternalUnavailable(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("{requested} features requested, at most {cap} allowed")]
    TooManyFeatures { requested: usize, cap: usize },
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error(transparent)]
    Core(#[from] soilfuse_core::Error),
}

/// JSON error body returned by the HTTP layer.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
}

impl QueryError {
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::NotFound(_) => "not_found",
            QueryError::ExternalUnavailable(_) => "external_unavailable",
            QueryError::UnknownFeature(_) => "unknown_feature",
            QueryError::TooManyFeatures { .. } => "too_many_features",
            QueryError::UnknownRegion(_) => "unknown_region",
            QueryError::InvalidArgument(_) => "invalid_argument",
            QueryError::InvalidData(_) | QueryError::Core(_) => "invalid_data",
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody { error: self.code(), message: self.to_string() }
    }
}

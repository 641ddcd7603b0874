use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: lon={lon}, lat={lat}")]
    InvalidCoordinate { lon: f64, lat: f64 },

    #[error("invalid feature definition `{id}`: {reason}")]
    InvalidFeature { id: String, reason: String },

    #[error("duplicate feature id `{0}`")]
    DuplicateFeature(String),

    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("unknown sample `{0}`")]
    UnknownSample(String),

    #[error("invalid cell for feature `{feature}` in sample `{sample}`: {violation}")]
    InvalidCell { sample: String, feature: String, violation: crate::model::CellViolation },

    #[error("invalid provenance for feature `{feature}` in sample `{sample}`: {reason}")]
    InvalidProvenance { sample: String, feature: String, reason: String },

    #[error("invalid codebook `{id}`: {reason}")]
    InvalidCodebook { id: String, reason: String },

    #[error("unknown code `{code}` for codebook `{codebook}`")]
    UnknownCode { codebook: String, code: String },

    #[error("unknown codebook `{0}`")]
    UnknownCodebook(String),

    #[error("invalid schema `{dataset}`: {reason}")]
    InvalidSchema { dataset: String, reason: String },

    #[error("raster header malformed: {0}")]
    MalformedHeader(String),

    #[error("raster shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-numeric raster cell at row {row}, column {col}: `{token}`")]
    NonNumericCell { row: usize, col: usize, token: String },

    #[error("table does not match schema `{dataset}`: {reason}")]
    HeaderMismatch { dataset: String, reason: String },

    #[error("feature `{feature}` is already claimed by dataset `{owner}`, cannot be written by `{dataset}`")]
    FeatureCollision { feature: String, owner: String, dataset: String },

    #[error("sample `{sample}` already exists at a different location")]
    SampleLocationConflict { sample: String },

    #[error("feature `{feature}` has modality {modality}, expected {expected}")]
    WrongModality { feature: String, modality: String, expected: String },

    #[error("constant column `{0}`: fewer than two distinct observed training values")]
    ConstantColumn(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed document: {0}")]
    Document(String),

    #[error("missing source file {0}")]
    MissingSource(PathBuf),

    #[error("io error on {path}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

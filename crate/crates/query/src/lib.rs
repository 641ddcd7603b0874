//! Geographic reasoning, feature screening and sample/feature retrieval over
//! a fused soil table, with an HTTP front end.

pub mod embed;
pub mod engine;
pub mod error;
pub mod geocoder;
pub mod geography;
pub mod http;

pub use embed::{embed_text, screen_features, Embedding, FeatureEmbedding, ScreenHit, ScreeningWeights};
pub use engine::{Area, BBox, EngineConfig, QueryEngine, SampleHit};
pub use error::QueryError;
pub use geocoder::{ExternalGeocoder, NominatimClient, GEOCODER_URL_ENV};
pub use geography::{AdminRegion, Gazetteer, RegionSet};
pub use http::{router, serve, AppState};

use std::path::Path;

/// Builds an engine from a dictionary export plus gazetteer and region CSVs.
pub fn load_engine(
    fused: &Path,
    gazetteer: Option<&Path>,
    regions: Option<&Path>,
    config: EngineConfig,
) -> Result<QueryEngine, QueryError> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| QueryError::InvalidData(format!("{}: {e}", p.display())));
    let table = soilfuse_core::import_dictionary(&read(fused)?)?;
    let gazetteer = match gazetteer {
        Some(p) => Gazetteer::from_csv(read(p)?.as_bytes())?,
        None => Gazetteer::default(),
    };
    let regions = match regions {
        Some(p) => RegionSet::from_csv(read(p)?.as_bytes())?,
        None => RegionSet::default(),
    };
    QueryEngine::new(table, gazetteer, regions, config)
}

//! Query operations over one immutable fused-table snapshot.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use soilfuse_core::export::encode_value;
use soilfuse_core::{haversine_m, FusedTable, GeoPoint, SourceKind};

use crate::embed::{screen_features, FeatureEmbedding, ScreenHit, ScreeningWeights};
use crate::error::QueryError;
use crate::geography::{Gazetteer, RegionSet};

pub const DEFAULT_DISTRIBUTION_CAP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineConfig {
    pub weights: ScreeningWeights,
    pub distribution_cap: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { weights: ScreeningWeights::default(), distribution_cap: DEFAULT_DISTRIBUTION_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeocodeHit {
    pub name: String,
    pub location: GeoPoint,
    pub admin_path: Vec<String>,
    pub source: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionHit {
    pub id: String,
    pub level: u32,
    pub parent_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellView {
    Observed {
        value: Value,
        unit: String,
        source_dataset_id: String,
        source_kind: SourceKind,
        alignment_distance_m: f64,
    },
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleHit {
    pub sample_id: String,
    pub survey: String,
    pub location: GeoPoint,
    pub distance_m: f64,
    pub features: BTreeMap<String, CellView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionPoint {
    pub sample_id: String,
    pub location: GeoPoint,
    pub value: Value,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub west: f64,
    pub south: f64,
    pub east: f64,
    pub north: f64,
}

impl BBox {
    pub fn new(west: f64, south: f64, east: f64, north: f64) -> Result<Self, QueryError> {
        if ![west, south, east, north].iter().all(|v| v.is_finite()) || west > east || south > north {
            return Err(QueryError::InvalidArgument(format!("bad box {west},{south},{east},{north}")));
        }
        Ok(BBox { west, south, east, north })
    }

    /// Edges are inclusive.
    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lon >= self.west && p.lon <= self.east && p.lat >= self.south && p.lat <= self.north
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Area {
    BBox(BBox),
    Region(String),
}

pub struct QueryEngine {
    table: FusedTable,
    index: Vec<FeatureEmbedding>,
    gazetteer: Gazetteer,
    regions: RegionSet,
    config: EngineConfig,
}

impl QueryEngine {
    pub fn new(table: FusedTable, gazetteer: Gazetteer, regions: RegionSet, config: EngineConfig) -> Result<Self, QueryError> {
        gazetteer.check_paths(&regions)?;
        if config.distribution_cap == 0 {
            return Err(QueryError::InvalidArgument("distribution cap must be positive".into()));
        }
        let index = table.features().iter().map(FeatureEmbedding::from_def).collect();
        Ok(QueryEngine { table, index, gazetteer, regions, config })
    }

    pub fn table(&self) -> &FusedTable {
        &self.table
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn geocode_local(&self, name: &str) -> Option<GeocodeHit> {
        self.gazetteer.lookup(name).map(|e| GeocodeHit {
            name: e.name.clone(),
            location: e.location,
            admin_path: e.admin_path.clone(),
            source: "gazetteer",
        })
    }

    pub fn admin_hierarchy(&self, p: &GeoPoint) -> Vec<RegionHit> {
        self.regions
            .admin_hierarchy(p)
            .into_iter()
            .map(|r| RegionHit { id: r.id.clone(), level: r.level, parent_id: r.parent_id.clone() })
            .collect()
    }

    pub fn screen(&self, query: &str, k: usize) -> Result<Vec<ScreenHit>, QueryError> {
        if k == 0 {
            return Err(QueryError::InvalidArgument("k must be at least 1".into()));
        }
        Ok(screen_features(query, k, &self.index, self.config.weights))
    }

    fn check_features(&self, ids: &[String]) -> Result<(), QueryError> {
        match ids.iter().find(|id| self.table.feature(id).is_none()) {
            Some(id) => Err(QueryError::UnknownFeature(id.clone())),
            None => Ok(()),
        }
    }

    /// The `k` samples nearest to `center` (ties by sample id) with the
    /// requested cells; an empty request returns every feature.
    pub fn query_samples(&self, center: &GeoPoint, k: usize, feature_ids: &[String]) -> Result<Vec<SampleHit>, QueryError> {
        if k == 0 {
            return Err(QueryError::InvalidArgument("k must be at least 1".into()));
        }
        self.check_features(feature_ids)?;
        let wanted: Vec<&str> = if feature_ids.is_empty() {
            self.table.features().iter().map(|f| f.id.as_str()).collect()
        } else {
            feature_ids.iter().map(String::as_str).collect()
        };

        let samples = self.table.samples();
        // Samples are sorted by id, so the index breaks distance ties by id.
        let mut ranked: Vec<(f64, usize)> =
            samples.iter().enumerate().map(|(i, s)| (haversine_m(center, &s.location), i)).collect();
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < ranked.len() {
            ranked.select_nth_unstable_by(k - 1, by_distance);
            ranked.truncate(k);
        }
        ranked.sort_by(by_distance);

        Ok(ranked
            .into_iter()
            .map(|(d, i)| {
                let s = &samples[i];
                let features = wanted
                    .iter()
                    .map(|fid| {
                        let view = match s.cells.get(*fid) {
                            Some(cell) => CellView::Observed {
                                value: encode_value(&cell.value),
                                unit: self.table.feature(fid).map(|f| f.unit.clone()).unwrap_or_default(),
                                source_dataset_id: cell.provenance.source_dataset_id.clone(),
                                source_kind: cell.provenance.source_kind,
                                alignment_distance_m: cell.provenance.alignment_distance_m,
                            },
                            None => CellView::Missing,
                        };
                        (fid.to_string(), view)
                    })
                    .collect();
                SampleHit {
                    sample_id: s.sample_id.clone(),
                    survey: s.source_survey.clone(),
                    location: s.location,
                    distance_m: d,
                    features,
                }
            })
            .collect())
    }

    /// Observed values of at most `distribution_cap` features over every
    /// sample inside `area`, ordered by sample id.
    pub fn query_feature_distribution(
        &self,
        area: &Area,
        feature_ids: &[String],
    ) -> Result<BTreeMap<String, Vec<DistributionPoint>>, QueryError> {
        if feature_ids.is_empty() {
            return Err(QueryError::InvalidArgument("no feature ids given".into()));
        }
        if feature_ids.len() > self.config.distribution_cap {
            return Err(QueryError::TooManyFeatures { requested: feature_ids.len(), cap: self.config.distribution_cap });
        }
        self.check_features(feature_ids)?;
        let inside: Box<dyn Fn(&GeoPoint) -> bool + '_> = match area {
            Area::BBox(b) => Box::new(move |p| b.contains(p)),
            Area::Region(id) => {
                let region = self.regions.get(id).ok_or_else(|| QueryError::UnknownRegion(id.clone()))?;
                Box::new(move |p| region.contains(p))
            }
        };
        let mut out: BTreeMap<String, Vec<DistributionPoint>> =
            feature_ids.iter().map(|f| (f.clone(), Vec::new())).collect();
        for s in self.table.samples().iter().filter(|s| inside(&s.location)) {
            for fid in feature_ids {
                if let Some(cell) = s.cells.get(fid) {
                    out.get_mut(fid).expect("seeded").push(DistributionPoint {
                        sample_id: s.sample_id.clone(),
                        location: s.location,
                        value: encode_value(&cell.value),
                    });
                }
            }
        }
        Ok(out)
    }
}

//! Schema execution: screening, record mapping, raster lookup and indexing.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{sample_location_key, Cell, CellValue, FeatureDef, FusedTable, Modality, Provenance, Sample, SourceKind};
use crate::schema::{ColumnMap, FusionSchema};
use crate::standardize::{StandardizedRecord, StdValue};
use crate::RasterGrid;

/// Map sources coarser than this are excluded.
pub const MAX_RESOLUTION_M: f64 = 5000.0;

/// Dataset id recorded on cells written by [`link_asset`].
pub const ASSET_DATASET_ID: &str = "asset";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreeningMeta {
    pub kind: SourceKind,
    pub has_georef: bool,
    pub resolution_m: Option<f64>,
    pub is_long_term_projection: bool,
}

impl ScreeningMeta {
    pub fn for_schema(schema: &FusionSchema) -> Self {
        ScreeningMeta {
            kind: schema.kind,
            has_georef: schema.georef_columns.is_some(),
            resolution_m: schema.resolution_m,
            is_long_term_projection: schema.long_term_projection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExclusionReason {
    CoarseResolution(f64),
    LongTermProjection,
    NoGeoreference,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionReason::CoarseResolution(r) => write!(f, "coarse resolution ({r} m > {MAX_RESOLUTION_M} m)"),
            ExclusionReason::LongTermProjection => f.write_str("long-term projection"),
            ExclusionReason::NoGeoreference => f.write_str("no georeference"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Screening {
    Keep,
    Exclude(ExclusionReason),
}

impl Screening {
    pub fn is_keep(&self) -> bool {
        matches!(self, Screening::Keep)
    }
}

/// Applies the three fusion-time exclusion rules, in a fixed order.
pub fn screen_dataset(meta: &ScreeningMeta) -> Screening {
    match meta.resolution_m {
        Some(r) if r > MAX_RESOLUTION_M => return Screening::Exclude(ExclusionReason::CoarseResolution(r)),
        _ => {}
    }
    if meta.is_long_term_projection {
        return Screening::Exclude(ExclusionReason::LongTermProjection);
    }
    if meta.kind == SourceKind::SampleStructured && !meta.has_georef {
        return Screening::Exclude(ExclusionReason::NoGeoreference);
    }
    Screening::Keep
}

/// Input handed to [`execute_schema`].
#[derive(Debug, Clone, Copy)]
pub enum FusionSource<'a> {
    Records(&'a [StandardizedRecord]),
    /// Raster name (as referenced by the schema's column maps) → grid.
    Rasters(&'a BTreeMap<String, RasterGrid>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FusionReport {
    pub dataset_id: String,
    pub samples_created: usize,
    pub samples_extended: usize,
    pub cells_written: usize,
    pub missing: usize,
    pub out_of_extent: usize,
    pub skipped_records: usize,
    pub warnings: Vec<String>,
}

/// Executes one schema against its standardized source.
///
/// Sample-structured sources create samples identified by
/// `<dataset_id>:<record_id>`; map-structured sources add cells to every
/// existing sample.
pub fn execute_schema(schema: &FusionSchema, source: FusionSource<'_>, table: FusedTable) -> Result<(FusedTable, FusionReport)> {
    schema.validate()?;
    for map in &schema.column_maps {
        if table.feature(&map.target).is_none() {
            return Err(Error::UnknownFeature(map.target.clone()));
        }
        if let Some(owner) = table.claims().get(&map.target) {
            if owner != &schema.dataset_id {
                return Err(Error::FeatureCollision {
                    feature: map.target.clone(),
                    owner: owner.clone(),
                    dataset: schema.dataset_id.clone(),
                });
            }
        }
        check_arity(schema, map, table.feature(&map.target).expect("checked"))?;
    }

    let mut report = FusionReport { dataset_id: schema.dataset_id.clone(), ..Default::default() };
    let defs: BTreeMap<String, FeatureDef> =
        schema.column_maps.iter().map(|m| (m.target.clone(), table.feature(&m.target).unwrap().clone())).collect();
    let (features, mut samples, mut claims) = table.into_parts();

    match (schema.kind, source) {
        (SourceKind::SampleStructured, FusionSource::Records(records)) => {
            fuse_records(schema, records, &defs, &mut samples, &mut report)?
        }
        (SourceKind::MapStructured, FusionSource::Rasters(rasters)) => {
            fuse_rasters(schema, rasters, &defs, &mut samples, &mut report)?
        }
        (kind, _) => {
            return Err(Error::InvalidArgument(format!(
                "source does not match {} schema `{}`",
                kind.as_str(),
                schema.dataset_id
            )))
        }
    }

    for map in &schema.column_maps {
        claims.insert(map.target.clone(), schema.dataset_id.clone());
    }
    let table = FusedTable::new(features, samples, claims)?;
    Ok((table, report))
}

fn check_arity(schema: &FusionSchema, map: &ColumnMap, def: &FeatureDef) -> Result<()> {
    let n = map.source.columns().len();
    let ok = match def.modality {
        Modality::VectorNum { dim } => n == dim,
        Modality::ScalarNum => n == 1,
        Modality::Categorical | Modality::Text | Modality::ImageRef => {
            n == 1 && schema.kind == SourceKind::SampleStructured
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::WrongModality {
            feature: def.id.clone(),
            modality: def.modality.to_string(),
            expected: format!("{n} {} source column(s)", schema.kind.as_str()),
        })
    }
}

fn fuse_records(
    schema: &FusionSchema,
    records: &[StandardizedRecord],
    defs: &BTreeMap<String, FeatureDef>,
    samples: &mut Vec<Sample>,
    report: &mut FusionReport,
) -> Result<()> {
    let mut by_id: BTreeMap<String, usize> =
        samples.iter().enumerate().map(|(i, s)| (s.sample_id.clone(), i)).collect();

    for rec in records {
        let Some(location) = rec.georef else {
            report.skipped_records += 1;
            report.warnings.push(format!("record `{}` has no valid georeference; skipped", rec.record_id));
            continue;
        };
        let sample_id = format!("{}:{}", schema.dataset_id, rec.record_id);
        let idx = match by_id.get(&sample_id) {
            Some(&i) => {
                if sample_location_key(&samples[i]) != crate::location_key(&location) {
                    return Err(Error::SampleLocationConflict { sample: sample_id });
                }
                report.samples_extended += 1;
                i
            }
            None => {
                let survey = rec.survey.as_deref().unwrap_or(schema.survey_label());
                samples.push(Sample::new(&sample_id, location, survey));
                by_id.insert(sample_id.clone(), samples.len() - 1);
                report.samples_created += 1;
                samples.len() - 1
            }
        };

        for map in &schema.column_maps {
            let def = &defs[&map.target];
            let parts: Vec<&StdValue> = map
                .source
                .columns()
                .iter()
                .map(|c| rec.values.get(c).unwrap_or(&StdValue::Missing))
                .collect();
            let value = record_cell(def, &parts).unwrap_or_else(|why| {
                report.warnings.push(format!("sample `{sample_id}`, feature `{}`: {why}", def.id));
                CellValue::Missing
            });
            if value.is_missing() {
                report.missing += 1;
                continue;
            }
            samples[idx].cells.insert(map.target.clone(), Cell { value, provenance: Provenance::sample(&schema.dataset_id) });
            report.cells_written += 1;
        }
    }
    Ok(())
}

/// Converts standardized parts into a cell for `def`. `Err` explains a
/// value that cannot be stored.
fn record_cell(def: &FeatureDef, parts: &[&StdValue]) -> Result<CellValue, String> {
    if parts.iter().any(|p| matches!(p, StdValue::Missing)) {
        return Ok(CellValue::Missing);
    }
    match (&def.modality, parts) {
        (Modality::ScalarNum, [StdValue::Number(x)]) => Ok(CellValue::Scalar(*x)),
        (Modality::VectorNum { .. }, _) => parts
            .iter()
            .map(|p| match p {
                StdValue::Number(x) => Ok(*x),
                _ => Err("non-numeric vector component".to_owned()),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(CellValue::Vector),
        (Modality::Categorical, [StdValue::Label(l)]) => {
            if def.label_index(l).is_some() {
                Ok(CellValue::Category(l.clone()))
            } else {
                Err(format!("label `{l}` not in vocabulary"))
            }
        }
        (Modality::Text, [StdValue::Text(s) | StdValue::Label(s)]) => Ok(CellValue::Text(s.clone())),
        (Modality::ImageRef, [StdValue::Text(s) | StdValue::Label(s)]) => Ok(CellValue::ImageRef(s.clone())),
        (modality, _) => Err(format!("value kind does not fit modality {modality}")),
    }
}

fn fuse_rasters(
    schema: &FusionSchema,
    rasters: &BTreeMap<String, RasterGrid>,
    defs: &BTreeMap<String, FeatureDef>,
    samples: &mut [Sample],
    report: &mut FusionReport,
) -> Result<()> {
    for map in &schema.column_maps {
        let bands = map
            .source
            .columns()
            .iter()
            .map(|name| rasters.get(name).ok_or_else(|| Error::Document(format!("raster `{name}` not provided"))))
            .collect::<Result<Vec<_>>>()?;
        let def = &defs[&map.target];

        for sample in samples.iter_mut() {
            let mut values = Vec::with_capacity(bands.len());
            let mut distance = 0.0f64;
            let mut outside = false;
            for grid in &bands {
                match grid.sample_at(&sample.location) {
                    crate::raster::Sample::Value { value, distance_m, .. } => {
                        values.push(value);
                        distance = distance.max(distance_m);
                    }
                    crate::raster::Sample::NoData { .. } => {}
                    crate::raster::Sample::OutOfExtent => outside = true,
                }
            }
            if outside {
                report.out_of_extent += 1;
                continue;
            }
            if values.len() < bands.len() {
                report.missing += 1;
                continue;
            }
            let value = match def.modality {
                Modality::ScalarNum => CellValue::Scalar(values[0]),
                _ => CellValue::Vector(values),
            };
            sample
                .cells
                .insert(map.target.clone(), Cell { value, provenance: Provenance::map(&schema.dataset_id, distance) });
            report.cells_written += 1;
        }
    }
    Ok(())
}

/// Links an image asset to a sample. Relinking overwrites and returns a warning.
pub fn link_asset(table: FusedTable, sample_id: &str, feature_id: &str, path: &str) -> Result<(FusedTable, Option<String>)> {
    let def = table.feature(feature_id).ok_or_else(|| Error::UnknownFeature(feature_id.to_owned()))?;
    if def.modality != Modality::ImageRef {
        return Err(Error::WrongModality {
            feature: feature_id.to_owned(),
            modality: def.modality.to_string(),
            expected: Modality::ImageRef.to_string(),
        });
    }
    if table.sample(sample_id).is_none() {
        return Err(Error::UnknownSample(sample_id.to_owned()));
    }
    let (features, mut samples, claims) = table.into_parts();
    let sample = samples.iter_mut().find(|s| s.sample_id == sample_id).expect("checked");
    let previous = sample.cells.insert(
        feature_id.to_owned(),
        Cell { value: CellValue::ImageRef(path.to_owned()), provenance: Provenance::sample(ASSET_DATASET_ID) },
    );
    let warning = previous.map(|old| {
        let old_path = match old.value {
            CellValue::ImageRef(p) => p,
            _ => String::new(),
        };
        format!("sample `{sample_id}`, feature `{feature_id}`: asset `{old_path}` replaced by `{path}`")
    });
    Ok((FusedTable::new(features, samples, claims)?, warning))
}

/// Groups sample ids by location key; ids within a group are sorted.
pub fn build_location_index(table: &FusedTable) -> BTreeMap<String, Vec<String>> {
    let mut index: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for sample in table.samples() {
        index.entry(sample_location_key(sample)).or_default().push(sample.sample_id.clone());
    }
    for ids in index.values_mut() {
        ids.sort();
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::haversine_m;
    use crate::GeoPoint;

    fn pt(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    fn record(id: &str, lon: f64, lat: f64, ph: f64, soc: f64, lc: &str) -> StandardizedRecord {
        StandardizedRecord {
            record_id: id.into(),
            survey: None,
            georef: Some(pt(lon, lat)),
            values: BTreeMap::from([
                ("ph".to_owned(), StdValue::Number(ph)),
                ("oc".to_owned(), StdValue::Number(soc)),
                ("lc".to_owned(), StdValue::Label(lc.into())),
            ]),
        }
    }

    fn six_records() -> Vec<StandardizedRecord> {
        vec![
            record("1", 10.005, 50.005, 6.1, 1.2, "cropland"),
            record("2", 10.015, 50.005, 5.4, 2.0, "forest"),
            record("3", 10.025, 50.015, 7.0, 0.8, "cropland"),
            record("4", 10.012, 50.018, 6.6, 1.9, "grassland"),
            record("5", 10.001, 50.011, 4.9, 3.1, "forest"),
            record("6", 10.029, 50.001, 7.4, 0.6, "grassland"),
        ]
    }

    fn base_table() -> FusedTable {
        FusedTable::with_features(vec![
            FeatureDef::scalar("ph_h2o", "pH in water", "", "chemistry"),
            FeatureDef::scalar("soc", "soil organic carbon", "%", "chemistry"),
            FeatureDef::categorical("land_cover", "land cover", "land", &["cropland", "forest", "grassland"]),
            FeatureDef::scalar("tmean", "mean annual temperature", "degC", "climate"),
            FeatureDef::vector("prec2", "two-season precipitation", "mm", "climate", 2),
            FeatureDef::image_ref("photo", "site photo", "imagery"),
        ])
        .unwrap()
    }

    fn survey_schema() -> FusionSchema {
        FusionSchema::sample_structured(
            "survey",
            "lon",
            "lat",
            vec![
                ColumnMap::new("ph", "ph_h2o"),
                ColumnMap::new("oc", "soc"),
                ColumnMap::categorical("lc", "land_cover", None),
            ],
        )
    }

    // 3 x 2 grid, cellsize 0.01 over lon [10.00, 10.03], lat [50.00, 50.02]
    fn tmean_grid() -> RasterGrid {
        RasterGrid::parse("ncols 3\nnrows 2\nxllcorner 10\nyllcorner 50\ncellsize 0.01\nnodata_value -9999\n8.1 8.2 8.3\n8.4 8.5 8.6\n")
            .unwrap()
    }

    #[test]
    fn screening_rules() {
        let map = |r: f64| ScreeningMeta {
            kind: SourceKind::MapStructured,
            has_georef: false,
            resolution_m: Some(r),
            is_long_term_projection: false,
        };
        assert!(matches!(screen_dataset(&map(10_000.0)), Screening::Exclude(ExclusionReason::CoarseResolution(_))));
        assert_eq!(screen_dataset(&map(250.0)), Screening::Keep);
        assert_eq!(screen_dataset(&map(5000.0)), Screening::Keep);
        let survey = ScreeningMeta {
            kind: SourceKind::SampleStructured,
            has_georef: false,
            resolution_m: None,
            is_long_term_projection: false,
        };
        assert_eq!(screen_dataset(&survey), Screening::Exclude(ExclusionReason::NoGeoreference));
        assert_eq!(ExclusionReason::NoGeoreference.to_string(), "no georeference");
        assert!(ExclusionReason::CoarseResolution(10_000.0).to_string().starts_with("coarse resolution"));
    }

    #[test]
    fn survey_into_empty_table() {
        let records = six_records();
        let (table, report) = execute_schema(&survey_schema(), FusionSource::Records(&records), base_table()).unwrap();
        assert_eq!(table.len(), 6);
        assert_eq!(table.cell_count(), 18);
        assert_eq!(report.cells_written, 18);
        assert_eq!(report.samples_created, 6);
        for s in table.samples() {
            assert!(s.cells.values().all(|c| c.provenance.alignment_distance_m == 0.0));
            assert_eq!(s.source_survey, "survey");
        }
        assert_eq!(table.claims()["soc"], "survey");
    }

    #[test]
    fn raster_over_survey_samples() {
        let records = six_records();
        let (table, _) = execute_schema(&survey_schema(), FusionSource::Records(&records), base_table()).unwrap();
        let rasters = BTreeMap::from([("tmean.asc".to_owned(), tmean_grid())]);
        let schema = FusionSchema::map_structured("climate", 1000.0, vec![ColumnMap::new("tmean.asc", "tmean")]);
        let (fused, report) = execute_schema(&schema, FusionSource::Rasters(&rasters), table).unwrap();
        assert_eq!(report.cells_written, 6);
        assert_eq!(fused.len(), 6);

        // hand-computed containing cells: (row, col) with row 0 = north (lat 50.01..50.02)
        let expected: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::from([
            ("survey:1", (8.4, 10.005, 50.005)),
            ("survey:2", (8.5, 10.015, 50.005)),
            ("survey:3", (8.3, 10.025, 50.015)),
            ("survey:4", (8.2, 10.015, 50.015)),
            ("survey:5", (8.1, 10.005, 50.015)),
            ("survey:6", (8.6, 10.025, 50.005)),
        ]);
        for s in fused.samples() {
            let cell = &s.cells["tmean"];
            let (v, clon, clat) = expected[s.sample_id.as_str()];
            assert_eq!(cell.value, CellValue::Scalar(v), "{}", s.sample_id);
            let d = haversine_m(&s.location, &pt(clon, clat));
            assert!((cell.provenance.alignment_distance_m - d).abs() <= 1e-9 * d.max(1.0));
            assert_eq!(cell.provenance.source_kind, SourceKind::MapStructured);
        }
    }

    #[test]
    fn collision_on_claimed_feature() {
        let records = six_records();
        let (table, _) = execute_schema(&survey_schema(), FusionSource::Records(&records), base_table()).unwrap();
        let mut other = survey_schema();
        other.dataset_id = "other".into();
        assert!(matches!(
            execute_schema(&other, FusionSource::Records(&records), table),
            Err(Error::FeatureCollision { .. })
        ));
    }

    #[test]
    fn vector_raster_and_missing_cells() {
        let records = six_records();
        let (table, _) = execute_schema(&survey_schema(), FusionSource::Records(&records), base_table()).unwrap();
        let a = tmean_grid();
        let b = RasterGrid::parse("ncols 3\nnrows 2\nxllcorner 10\nyllcorner 50\ncellsize 0.01\nnodata_value -9999\n1 2 3\n4 -9999 6\n").unwrap();
        let rasters = BTreeMap::from([("a".to_owned(), a), ("b".to_owned(), b)]);
        let schema = FusionSchema::map_structured("prec", 1000.0, vec![ColumnMap::vector(&["a", "b"], "prec2")]);
        let (fused, report) = execute_schema(&schema, FusionSource::Rasters(&rasters), table).unwrap();
        assert_eq!(report.cells_written, 5);
        assert_eq!(report.missing, 1);
        assert!(fused.sample("survey:2").unwrap().value("prec2").is_none());
        assert_eq!(fused.sample("survey:1").unwrap().value("prec2"), Some(&CellValue::Vector(vec![8.4, 4.0])));
    }

    #[test]
    fn out_of_extent_is_missing() {
        let mut records = six_records();
        records.push(record("7", 11.5, 50.0, 6.0, 1.0, "forest"));
        let (table, _) = execute_schema(&survey_schema(), FusionSource::Records(&records), base_table()).unwrap();
        let rasters = BTreeMap::from([("tmean.asc".to_owned(), tmean_grid())]);
        let schema = FusionSchema::map_structured("climate", 1000.0, vec![ColumnMap::new("tmean.asc", "tmean")]);
        let (fused, report) = execute_schema(&schema, FusionSource::Rasters(&rasters), table).unwrap();
        assert_eq!(report.out_of_extent, 1);
        assert_eq!(fused.len(), 7);
        assert!(fused.sample("survey:7").unwrap().value("tmean").is_none());
    }

    #[test]
    fn unknown_label_and_skipped_record() {
        let mut records = six_records();
        records[0].values.insert("lc".into(), StdValue::Label("urban".into()));
        records[1].georef = None;
        let (table, report) = execute_schema(&survey_schema(), FusionSource::Records(&records), base_table()).unwrap();
        assert_eq!(table.len(), 5);
        assert_eq!(report.skipped_records, 1);
        assert_eq!(report.missing, 1);
        assert_eq!(report.warnings.len(), 2);
    }

    #[test]
    fn reexecuting_extends_existing_samples() {
        let records = six_records();
        let (table, _) = execute_schema(&survey_schema(), FusionSource::Records(&records), base_table()).unwrap();
        let (again, report) = execute_schema(&survey_schema(), FusionSource::Records(&records), table.clone()).unwrap();
        assert_eq!(report.samples_extended, 6);
        assert_eq!(again, table);

        let mut moved = records.clone();
        moved[0].georef = Some(pt(12.0, 51.0));
        assert!(matches!(
            execute_schema(&survey_schema(), FusionSource::Records(&moved), table),
            Err(Error::SampleLocationConflict { .. })
        ));
    }

    #[test]
    fn asset_links() {
        let records = six_records();
        let (table, _) = execute_schema(&survey_schema(), FusionSource::Records(&records), base_table()).unwrap();
        let (table, warn) = link_asset(table, "survey:1", "photo", "photos/1.jpg").unwrap();
        assert!(warn.is_none());
        assert_eq!(table.sample("survey:1").unwrap().value("photo"), Some(&CellValue::ImageRef("photos/1.jpg".into())));
        let (table, warn) = link_asset(table, "survey:1", "photo", "photos/1b.jpg").unwrap();
        assert!(warn.unwrap().contains("replaced"));
        assert_eq!(table.sample("survey:1").unwrap().value("photo"), Some(&CellValue::ImageRef("photos/1b.jpg".into())));
        assert!(matches!(link_asset(table.clone(), "nope", "photo", "x"), Err(Error::UnknownSample(_))));
        assert!(matches!(link_asset(table, "survey:1", "soc", "x"), Err(Error::WrongModality { .. })));
    }

    #[test]
    fn location_index_groups() {
        let samples = vec![
            Sample::new("d", pt(10.0, 50.0), "s"),
            Sample::new("a", pt(10.000001, 50.000001), "s"),
            Sample::new("c", pt(10.000004, 49.999996), "s"),
            Sample::new("b", pt(11.0, 50.0), "s"),
        ];
        let table = FusedTable::new(vec![], samples, BTreeMap::new()).unwrap();
        let index = build_location_index(&table);
        let mut sizes: Vec<usize> = index.values().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 3]);
        assert_eq!(index["1000000:5000000"], vec!["a", "c", "d"]);
        assert_eq!(build_location_index(&table), index);
        assert!(build_location_index(&FusedTable::empty()).is_empty());
    }
}

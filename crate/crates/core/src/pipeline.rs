//! File-level driver: catalogs, schema directories and standardized outputs.
//!
//! Directory conventions:
//!
//! * schema directory: one `*.toml` [`FusionSchema`] per dataset plus
//!   `features.toml` holding `[[features]]` definitions;
//! * codebook directory: one `*.toml` [`Codebook`] per file;
//! * standardized directory: `<dataset_id>.csv` + `<dataset_id>.meta.json`
//!   for sample sources, `<dataset_id>/<raster>.asc` for map sources.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuse::{execute_schema, screen_dataset, ExclusionReason, FusionReport, FusionSource, Screening, ScreeningMeta};
use crate::model::{Codebook, FeatureDef, FusedTable, SourceKind};
use crate::schema::FusionSchema;
use crate::standardize::{
    read_standardized_csv, standardize_raster, standardize_table, write_standardized_csv, IssueReport, RawTable,
    StandardizedMeta,
};
use crate::RasterGrid;

pub const FEATURE_CATALOG: &str = "features.toml";

#[derive(Debug, Serialize, Deserialize)]
struct CatalogDoc {
    #[serde(default)]
    features: Vec<FeatureDef>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `*.toml` files of a directory in name order.
fn toml_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "toml") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn parse_feature_catalog(text: &str) -> Result<Vec<FeatureDef>> {
    Ok(toml::from_str::<CatalogDoc>(text)?.features)
}

pub fn load_feature_catalog(path: &Path) -> Result<Vec<FeatureDef>> {
    parse_feature_catalog(&read(path)?)
}

/// Loads every schema of `dir` except the feature catalog, in execution order:
/// sample-structured by dataset id, then map-structured by dataset id.
pub fn load_schemas(dir: &Path) -> Result<Vec<FusionSchema>> {
    let mut schemas = Vec::new();
    for path in toml_files(dir)? {
        if path.file_name().is_some_and(|n| n == FEATURE_CATALOG) {
            continue;
        }
        schemas.push(FusionSchema::load(&path)?);
    }
    order_schemas(&mut schemas);
    Ok(schemas)
}

pub fn order_schemas(schemas: &mut [FusionSchema]) {
    schemas.sort_by(|a, b| {
        let rank = |s: &FusionSchema| (s.kind == SourceKind::MapStructured) as u8;
        rank(a).cmp(&rank(b)).then_with(|| a.dataset_id.cmp(&b.dataset_id))
    });
}

pub fn load_codebooks(dir: &Path) -> Result<BTreeMap<String, Codebook>> {
    let mut out = BTreeMap::new();
    for path in toml_files(dir)? {
        let cb: Codebook = toml::from_str(&read(&path)?)?;
        cb.validate()?;
        if out.contains_key(&cb.id) {
            return Err(Error::InvalidCodebook { id: cb.id, reason: "defined twice".into() });
        }
        out.insert(cb.id.clone(), cb);
    }
    Ok(out)
}

/// Reads every `*.asc` raster of a directory, keyed by file stem.
pub fn load_rasters(dir: &Path) -> Result<BTreeMap<String, RasterGrid>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "asc") {
            let stem = path.file_stem().expect("has extension").to_string_lossy().into_owned();
            out.insert(stem, RasterGrid::parse(&read(&path)?)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandardizeSummary {
    pub dataset_id: String,
    pub records: usize,
    pub rasters: usize,
    pub set_missing: usize,
    pub outputs: Vec<PathBuf>,
}

/// Standardizes one raw source into `out_dir`.
///
/// Sample sources read a CSV file at `input` and also write
/// `<dataset_id>.issues.csv`. Map sources read `<raster>.asc` files from the
/// `input` directory for every raster referenced by the schema.
pub fn standardize_source(
    input: &Path,
    schema: &FusionSchema,
    codebooks: &BTreeMap<String, Codebook>,
    out_dir: &Path,
) -> Result<(StandardizeSummary, IssueReport)> {
    schema.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let id = &schema.dataset_id;
    let mut summary =
        StandardizeSummary { dataset_id: id.clone(), records: 0, rasters: 0, set_missing: 0, outputs: Vec::new() };

    match schema.kind {
        SourceKind::SampleStructured => {
            let raw = RawTable::from_path(input)?;
            let std = standardize_table(&raw, schema, codebooks)?;
            let meta = StandardizedMeta::for_schema(schema);
            let csv_path = out_dir.join(format!("{id}.csv"));
            let meta_path = out_dir.join(format!("{id}.meta.json"));
            let issues_path = out_dir.join(format!("{id}.issues.csv"));
            write(&csv_path, &write_standardized_csv(&std.records, &meta, schema.survey_label())?)?;
            write(&meta_path, &(serde_json::to_string_pretty(&meta)? + "\n"))?;
            write(&issues_path, &std.report.to_csv()?)?;
            summary.records = std.records.len();
            summary.set_missing = std.report.set_missing_count();
            summary.outputs = vec![csv_path, meta_path, issues_path];
            Ok((summary, std.report))
        }
        SourceKind::MapStructured => {
            let raster_dir = out_dir.join(id);
            fs::create_dir_all(&raster_dir).map_err(|e| Error::io(&raster_dir, e))?;
            for map in &schema.column_maps {
                for name in map.source.columns() {
                    let path = input.join(format!("{name}.asc"));
                    if !path.is_file() {
                        return Err(Error::MissingSource(path));
                    }
                    let grid = RasterGrid::parse(&read(&path)?)?;
                    let (std, invalidated) = standardize_raster(&grid, map);
                    let out = raster_dir.join(format!("{name}.asc"));
                    write(&out, &std.to_text())?;
                    summary.rasters += 1;
                    summary.set_missing += invalidated;
                    summary.outputs.push(out);
                }
            }
            Ok((summary, IssueReport::default()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseOutcome {
    pub table: FusedTable,
    pub reports: Vec<FusionReport>,
    pub excluded: Vec<(String, ExclusionReason)>,
}

/// Screens and executes `schemas` (in the given order) against a
/// standardized directory, starting from an empty table over `features`.
pub fn fuse_directory(std_dir: &Path, schemas: &[FusionSchema], features: Vec<FeatureDef>) -> Result<FuseOutcome> {
    let mut table = FusedTable::with_features(features)?;
    let mut reports = Vec::new();
    let mut excluded = Vec::new();
    for schema in schemas {
        if let Screening::Exclude(reason) = screen_dataset(&ScreeningMeta::for_schema(schema)) {
            excluded.push((schema.dataset_id.clone(), reason));
            continue;
        }
        let id = &schema.dataset_id;
        let (next, report) = match schema.kind {
            SourceKind::SampleStructured => {
                let csv_path = std_dir.join(format!("{id}.csv"));
                let meta_path = std_dir.join(format!("{id}.meta.json"));
                if !csv_path.is_file() {
                    return Err(Error::MissingSource(csv_path));
                }
                let meta: StandardizedMeta = if meta_path.is_file() {
                    serde_json::from_str(&read(&meta_path)?)?
                } else {
                    StandardizedMeta::for_schema(schema)
                };
                let file = fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
                let records = read_standardized_csv(file, &meta)?;
                execute_schema(schema, FusionSource::Records(&records), table)?
            }
            SourceKind::MapStructured => {
                let dir = std_dir.join(id);
                if !dir.is_dir() {
                    return Err(Error::MissingSource(dir));
                }
                let rasters = load_rasters(&dir)?;
                execute_schema(schema, FusionSource::Rasters(&rasters), table)?
            }
        };
        table = next;
        reports.push(report);
    }
    Ok(FuseOutcome { table, reports, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ColumnMap, InvalidRule};

    const CATALOG: &str = r#"
[[features]]
id = "ph"
name = "pH"
theme = "chemistry"
modality = "scalar_num"

[[features]]
id = "tmean"
name = "Mean temperature"
unit = "degC"
theme = "climate"
modality = "scalar_num"
"#;

    fn setup(dir: &Path) -> Vec<FusionSchema> {
        let raw = dir.join("raw");
        fs::create_dir_all(raw.join("clim")).unwrap();
        fs::write(raw.join("survey.csv"), "lon,lat,ph\n10.1,50.1,6.5\n10.2,50.2,0\n").unwrap();
        fs::write(
            raw.join("clim/t.asc"),
            "ncols 2\nnrows 2\nxllcorner 10\nyllcorner 50\ncellsize 0.5\nnodata_value -9999\n100 200\n300 400\n",
        )
        .unwrap();
        let survey = FusionSchema::sample_structured(
            "survey",
            "lon",
            "lat",
            vec![ColumnMap::new("ph", "ph").with_rules(&[InvalidRule::EqualsSentinel(0.0)])],
        );
        let clim = FusionSchema::map_structured("clim", 1000.0, vec![ColumnMap::new("t", "tmean").with_conversion(0.1, 0.0)]);
        let mut coarse = FusionSchema::map_structured("coarse", 9000.0, vec![ColumnMap::new("t", "tmean")]);
        coarse.long_term_projection = true;
        vec![clim, coarse, survey]
    }

    #[test]
    fn standardize_then_fuse() {
        let dir = tempfile::tempdir().unwrap();
        let mut schemas = setup(dir.path());
        order_schemas(&mut schemas);
        assert_eq!(schemas.iter().map(|s| s.dataset_id.as_str()).collect::<Vec<_>>(), ["survey", "clim", "coarse"]);

        let std_dir = dir.path().join("std");
        let none = BTreeMap::new();
        let (s, report) = standardize_source(&dir.path().join("raw/survey.csv"), &schemas[0], &none, &std_dir).unwrap();
        assert_eq!((s.records, s.set_missing), (2, 1));
        assert_eq!(report.entries.len(), 1);
        let (m, _) = standardize_source(&dir.path().join("raw/clim"), &schemas[1], &none, &std_dir).unwrap();
        assert_eq!(m.rasters, 1);

        let out = fuse_directory(&std_dir, &schemas, parse_feature_catalog(CATALOG).unwrap()).unwrap();
        assert_eq!(out.table.len(), 2);
        assert_eq!(out.excluded, vec![("coarse".to_owned(), ExclusionReason::CoarseResolution(9000.0))]);
        assert_eq!(out.reports.len(), 2);
        let first = out.table.sample("survey:1").unwrap();
        assert_eq!(first.value("ph"), Some(&crate::CellValue::Scalar(6.5)));
        assert_eq!(first.value("tmean"), Some(&crate::CellValue::Scalar(30.0)));
        assert!(out.table.sample("survey:2").unwrap().value("ph").is_none());
    }

    #[test]
    fn missing_standardized_source() {
        let dir = tempfile::tempdir().unwrap();
        let schemas = setup(dir.path());
        let err = fuse_directory(dir.path(), &schemas[2..], parse_feature_catalog(CATALOG).unwrap()).unwrap_err();
        assert!(matches!(err, Error::MissingSource(_)));
    }

    #[test]
    fn schema_and_codebook_directories() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(FEATURE_CATALOG), CATALOG).unwrap();
        for s in setup(dir.path()) {
            fs::write(dir.path().join(format!("{}.toml", s.dataset_id)), toml::to_string(&s).unwrap()).unwrap();
        }
        let schemas = load_schemas(dir.path()).unwrap();
        assert_eq!(schemas.iter().map(|s| s.dataset_id.as_str()).collect::<Vec<_>>(), ["survey", "clim", "coarse"]);

        let cb_dir = dir.path().join("cb");
        fs::create_dir(&cb_dir).unwrap();
        fs::write(cb_dir.join("lc.toml"), "id = \"lc\"\nmissing_codes = [\"99\"]\n[mapping]\n1 = \"forest\"\n").unwrap();
        let cbs = load_codebooks(&cb_dir).unwrap();
        assert_eq!(cbs["lc"].mapping["1"], "forest");
    }
}

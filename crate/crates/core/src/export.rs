//! Dictionary (JSON) and flat (CSV + column metadata) exports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::availability::{summarize_alignment, AlignmentSummary};
use crate::error::{Error, Result};
use crate::model::{Cell, CellValue, FeatureDef, FusedTable, Modality, Provenance, Sample, SourceKind};
use crate::GeoPoint;

pub const DICTIONARY_FORMAT: &str = "soilfuse-dictionary";
pub const DICTIONARY_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DictionaryDoc {
    format: String,
    version: u32,
    features: Vec<FeatureDef>,
    claims: BTreeMap<String, String>,
    samples: BTreeMap<String, SampleDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleDoc {
    survey: String,
    location: GeoPoint,
    features: BTreeMap<String, CellDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellDoc {
    value: Value,
    unit: String,
    source_dataset_id: String,
    source_kind: SourceKind,
    alignment_distance_m: f64,
}

/// JSON form of a cell value as used in the dictionary export.
pub fn encode_value(value: &CellValue) -> Value {
    match value {
        CellValue::Scalar(x) => Value::from(*x),
        CellValue::Vector(xs) => Value::from(xs.clone()),
        CellValue::Category(s) | CellValue::Text(s) | CellValue::ImageRef(s) => Value::from(s.clone()),
        CellValue::Missing => Value::Null,
    }
}

fn decode_value(def: &FeatureDef, value: &Value) -> Result<CellValue> {
    let bad = || Error::Document(format!("value {value} does not fit feature `{}` ({})", def.id, def.modality));
    Ok(match def.modality {
        Modality::ScalarNum => CellValue::Scalar(value.as_f64().ok_or_else(bad)?),
        Modality::VectorNum { .. } => CellValue::Vector(
            value
                .as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|v| v.as_f64().ok_or_else(bad))
                .collect::<Result<_>>()?,
        ),
        Modality::Categorical => CellValue::Category(value.as_str().ok_or_else(bad)?.to_owned()),
        Modality::Text => CellValue::Text(value.as_str().ok_or_else(bad)?.to_owned()),
        Modality::ImageRef => CellValue::ImageRef(value.as_str().ok_or_else(bad)?.to_owned()),
    })
}

/// Sample-keyed JSON document. Image references are checked against
/// `asset_root` when given; unreadable ones produce warnings and are kept.
pub fn export_dictionary(table: &FusedTable, asset_root: Option<&Path>) -> Result<(String, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut samples = BTreeMap::new();
    for sample in table.samples() {
        let mut features = BTreeMap::new();
        for (fid, cell) in &sample.cells {
            let def = table.feature(fid).expect("table invariant");
            if let (CellValue::ImageRef(path), Some(root)) = (&cell.value, asset_root) {
                if std::fs::metadata(root.join(path)).is_err() {
                    warnings.push(format!("sample `{}`: asset `{path}` is not readable", sample.sample_id));
                }
            }
            features.insert(
                fid.clone(),
                CellDoc {
                    value: encode_value(&cell.value),
                    unit: def.unit.clone(),
                    source_dataset_id: cell.provenance.source_dataset_id.clone(),
                    source_kind: cell.provenance.source_kind,
                    alignment_distance_m: cell.provenance.alignment_distance_m,
                },
            );
        }
        samples.insert(
            sample.sample_id.clone(),
            SampleDoc { survey: sample.source_survey.clone(), location: sample.location, features },
        );
    }
    let doc = DictionaryDoc {
        format: DICTIONARY_FORMAT.to_owned(),
        version: DICTIONARY_VERSION,
        features: table.features().to_vec(),
        claims: table.claims().clone(),
        samples,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok((text, warnings))
}

pub fn import_dictionary(text: &str) -> Result<FusedTable> {
    let doc: DictionaryDoc = serde_json::from_str(text)?;
    if doc.format != DICTIONARY_FORMAT || doc.version != DICTIONARY_VERSION {
        return Err(Error::Document(format!("unsupported dictionary format {} v{}", doc.format, doc.version)));
    }
    let defs: BTreeMap<&str, &FeatureDef> = doc.features.iter().map(|f| (f.id.as_str(), f)).collect();
    let mut samples = Vec::with_capacity(doc.samples.len());
    for (id, sd) in &doc.samples {
        let location = GeoPoint::new(sd.location.lon, sd.location.lat)?;
        let mut sample = Sample::new(id, location, &sd.survey);
        for (fid, cd) in &sd.features {
            let def = defs.get(fid.as_str()).ok_or_else(|| Error::UnknownFeature(fid.clone()))?;
            if cd.unit != def.unit {
                return Err(Error::Document(format!("unit `{}` of `{fid}` in `{id}` disagrees with `{}`", cd.unit, def.unit)));
            }
            sample.cells.insert(
                fid.clone(),
                Cell {
                    value: decode_value(def, &cd.value)?,
                    provenance: Provenance {
                        source_dataset_id: cd.source_dataset_id.clone(),
                        source_kind: cd.source_kind,
                        alignment_distance_m: cd.alignment_distance_m,
                    },
                },
            );
        }
        samples.push(sample);
    }
    FusedTable::new(doc.features, samples, doc.claims)
}

/// Metadata of one flat-table column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub column: String,
    pub feature_id: String,
    /// 1-based component for vector features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    pub unit: String,
    pub theme: String,
    pub modality: String,
    pub sources: Vec<String>,
    pub alignment: Option<AlignmentSummary>,
}

/// Leading identification columns of the flat table.
pub const FLAT_ID_COLUMNS: [&str; 4] = ["sample_id", "survey", "lon", "lat"];

/// Column names a feature expands to in the flat table.
pub fn flat_columns(def: &FeatureDef) -> Vec<String> {
    match def.modality {
        Modality::VectorNum { dim } => (1..=dim).map(|i| format!("{}_{i}", def.id)).collect(),
        _ => vec![def.id.clone()],
    }
}

/// Samples as rows, features as columns (vectors expanded to `<id>_1..<id>_d`),
/// plus a JSON document describing each feature column.
pub fn export_flat_table(table: &FusedTable) -> Result<(String, String)> {
    let mut infos = Vec::new();
    let mut header: Vec<String> = FLAT_ID_COLUMNS.iter().map(|s| s.to_string()).collect();
    for def in table.features() {
        let sources: BTreeSet<&str> = table
            .samples()
            .iter()
            .filter_map(|s| s.cells.get(&def.id))
            .map(|c| c.provenance.source_dataset_id.as_str())
            .collect();
        let alignment = summarize_alignment(table, &def.id);
        let columns = flat_columns(def);
        let vector = columns.len() > 1;
        for (i, column) in columns.into_iter().enumerate() {
            header.push(column.clone());
            infos.push(ColumnInfo {
                column,
                feature_id: def.id.clone(),
                component: vector.then_some(i + 1),
                unit: def.unit.clone(),
                theme: def.theme.clone(),
                modality: def.modality.tag().to_owned(),
                sources: sources.iter().map(|s| s.to_string()).collect(),
                alignment,
            });
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for sample in table.samples() {
        let mut row = vec![
            sample.sample_id.clone(),
            sample.source_survey.clone(),
            sample.location.lon.to_string(),
            sample.location.lat.to_string(),
        ];
        for def in table.features() {
            match (sample.value(&def.id), def.modality) {
                (Some(CellValue::Vector(xs)), _) => row.extend(xs.iter().map(|x| x.to_string())),
                (None, Modality::VectorNum { dim }) => row.extend(std::iter::repeat_n(String::new(), dim)),
                (Some(CellValue::Scalar(x)), _) => row.push(x.to_string()),
                (Some(CellValue::Category(s) | CellValue::Text(s) | CellValue::ImageRef(s)), _) => row.push(s.clone()),
                (Some(CellValue::Missing) | None, _) => row.push(String::new()),
            }
        }
        w.write_record(&row)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Document(e.to_string()))?).expect("csv is utf-8");
    let mut columns = serde_json::to_string_pretty(&serde_json::json!({ "columns": infos }))?;
    columns.push('\n');
    Ok((csv, columns))
}

//! Raw sources → standardized records and rasters.
//!
//! Cell-level problems never abort: the offending value becomes `Missing`
//! and an [`Issue`] is recorded so the run can be reviewed afterwards.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Codebook, SourceKind};
use crate::schema::{ColumnMap, FusionSchema, InvalidRule, ValueKind};
use crate::{GeoPoint, RasterGrid};

/// Header plus string-valued rows, all with header arity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        if let Some(i) = rows.iter().position(|r| r.len() != header.len()) {
            return Err(Error::Document(format!(
                "row {i} has {} fields, header has {}",
                rows[i].len(),
                header.len()
            )));
        }
        Ok(RawTable { header, rows })
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect::<Vec<_>>();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_owned).collect());
        }
        Self::new(header, rows)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(file)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// A standardized value: numbers are converted and finite, labels resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum StdValue {
    Number(f64),
    Label(String),
    Text(String),
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedRecord {
    pub record_id: String,
    pub survey: Option<String>,
    pub georef: Option<GeoPoint>,
    /// Source column → standardized value.
    pub values: BTreeMap<String, StdValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "rule")]
pub enum IssueKind {
    InvalidValue(String),
    UnknownCode,
    NonNumeric,
    InvalidGeoref,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueAction {
    SetMissing,
    GeorefUnset,
}

/// One correction applied during standardization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    /// Zero-based data row.
    pub row: usize,
    pub column: String,
    pub raw: String,
    pub kind: IssueKind,
    pub action: IssueAction,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IssueReport {
    pub entries: Vec<Issue>,
    /// Mapped input cells examined.
    pub input_cells: usize,
    /// Cells that were empty or matched a declared missing code.
    pub declared_missing: usize,
}

impl IssueReport {
    pub fn set_missing_count(&self) -> usize {
        self.entries.iter().filter(|e| e.action == IssueAction::SetMissing).count()
    }

    /// CSV rendering: `row,column,raw,issue,action`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row", "column", "raw", "issue", "action"])?;
        for e in &self.entries {
            let issue = match &e.kind {
                IssueKind::InvalidValue(rule) => format!("invalid_value:{rule}"),
                IssueKind::UnknownCode => "unknown_code".into(),
                IssueKind::NonNumeric => "non_numeric".into(),
                IssueKind::InvalidGeoref => "invalid_georef".into(),
            };
            let action = match e.action {
                IssueAction::SetMissing => "set_missing",
                IssueAction::GeorefUnset => "georef_unset",
            };
            w.write_record([e.row.to_string(), e.column.clone(), e.raw.clone(), issue, action.to_owned()])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Document(e.to_string()))?).expect("csv is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub records: Vec<StandardizedRecord>,
    pub report: IssueReport,
}

/// Resolves a raw categorical code. `Ok(None)` is a declared missing code.
pub fn apply_codebook(raw: &str, cb: &Codebook) -> Result<Option<String>> {
    let code = raw.trim();
    if let Some(label) = cb.mapping.get(code) {
        Ok(Some(label.clone()))
    } else if cb.missing_codes.contains(code) {
        Ok(None)
    } else {
        Err(Error::UnknownCode { codebook: cb.id.clone(), code: code.to_owned() })
    }
}

/// First rule that marks `value` invalid.
pub fn firing_rule(value: f64, rules: &[InvalidRule]) -> Option<InvalidRule> {
    rules.iter().copied().find(|r| r.fires(value))
}

/// `None` (missing) if any rule fires, otherwise the value unchanged.
pub fn detect_invalid_numeric(value: f64, rules: &[InvalidRule]) -> Option<f64> {
    match firing_rule(value, rules) {
        Some(_) => None,
        None => Some(value),
    }
}

/// Affine unit conversion `value * scale + offset`.
pub fn convert_unit(value: f64, scale: f64, offset: f64) -> f64 {
    debug_assert!(scale != 0.0, "zero scale");
    value * scale + offset
}

pub fn parse_portable_raster(text: &str) -> Result<RasterGrid> {
    RasterGrid::parse(text)
}

/// Reserved column names of the standardized CSV layout.
pub const RESERVED_COLUMNS: [&str; 4] = ["record_id", "survey", "lon", "lat"];

struct ColumnPlan<'a> {
    map: &'a ColumnMap,
    codebook: Option<&'a Codebook>,
    indices: Vec<usize>,
}

fn header_mismatch(schema: &FusionSchema, reason: String) -> Error {
    Error::HeaderMismatch { dataset: schema.dataset_id.clone(), reason }
}

fn require_column(raw: &RawTable, schema: &FusionSchema, name: &str) -> Result<usize> {
    raw.column(name).ok_or_else(|| header_mismatch(schema, format!("column `{name}` not in header")))
}

/// Standardizes one sample-structured table according to its schema.
pub fn standardize_table(
    raw: &RawTable,
    schema: &FusionSchema,
    codebooks: &BTreeMap<String, Codebook>,
) -> Result<Standardized> {
    if schema.kind != SourceKind::SampleStructured {
        return Err(Error::InvalidArgument(format!("`{}` is not a sample-structured schema", schema.dataset_id)));
    }
    schema.validate()?;
    if raw.header.is_empty() && raw.rows.is_empty() {
        return Ok(Standardized { records: Vec::new(), report: IssueReport::default() });
    }

    let (lon_col, lat_col) = schema.georef_columns.as_ref().expect("validated");
    let lon_idx = require_column(raw, schema, lon_col)?;
    let lat_idx = require_column(raw, schema, lat_col)?;
    let id_idx = schema.id_column.as_deref().map(|c| require_column(raw, schema, c)).transpose()?;
    let survey_idx = schema.survey_column.as_deref().map(|c| require_column(raw, schema, c)).transpose()?;

    let mut plans = Vec::with_capacity(schema.column_maps.len());
    for map in &schema.column_maps {
        let codebook = match &map.codebook {
            Some(id) => {
                let cb = codebooks.get(id).ok_or_else(|| Error::UnknownCodebook(id.clone()))?;
                cb.validate()?;
                Some(cb)
            }
            None => None,
        };
        let mut indices = Vec::new();
        for col in map.source.columns() {
            if RESERVED_COLUMNS.contains(&col.as_str()) {
                return Err(header_mismatch(schema, format!("mapped column `{col}` uses a reserved name")));
            }
            indices.push(require_column(raw, schema, col)?);
        }
        plans.push(ColumnPlan { map, codebook, indices });
    }

    let mut report = IssueReport::default();
    let mut records = Vec::with_capacity(raw.rows.len());
    for (row_no, row) in raw.rows.iter().enumerate() {
        let georef = parse_georef(&row[lon_idx], &row[lat_idx]);
        if georef.is_none() {
            report.entries.push(Issue {
                row: row_no,
                column: format!("{lon_col},{lat_col}"),
                raw: format!("{},{}", row[lon_idx], row[lat_idx]),
                kind: IssueKind::InvalidGeoref,
                action: IssueAction::GeorefUnset,
            });
        }
        let record_id = id_idx
            .map(|i| row[i].trim().to_owned())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| (row_no + 1).to_string());
        let survey = survey_idx.map(|i| row[i].trim().to_owned()).filter(|s| !s.is_empty());

        let mut values = BTreeMap::new();
        for plan in &plans {
            for (&idx, column) in plan.indices.iter().zip(plan.map.source.columns()) {
                report.input_cells += 1;
                let value = standardize_cell(&row[idx], plan, row_no, column, &mut report);
                values.insert(column.clone(), value);
            }
        }
        records.push(StandardizedRecord { record_id, survey, georef, values });
    }
    Ok(Standardized { records, report })
}

fn parse_georef(lon: &str, lat: &str) -> Option<GeoPoint> {
    let lon = lon.trim().parse::<f64>().ok()?;
    let lat = lat.trim().parse::<f64>().ok()?;
    GeoPoint::new(lon, lat).ok()
}

fn standardize_cell(raw: &str, plan: &ColumnPlan<'_>, row: usize, column: &str, report: &mut IssueReport) -> StdValue {
    let map = plan.map;
    let trimmed = raw.trim();
    if trimmed.is_empty() || map.missing_codes.iter().any(|c| c == trimmed) {
        report.declared_missing += 1;
        return StdValue::Missing;
    }
    let mut issue = |kind: IssueKind| {
        report.entries.push(Issue {
            row,
            column: column.to_owned(),
            raw: raw.to_owned(),
            kind,
            action: IssueAction::SetMissing,
        });
        StdValue::Missing
    };
    match map.value_kind {
        ValueKind::Numeric => match trimmed.parse::<f64>() {
            Ok(x) if x.is_finite() => match firing_rule(x, &map.invalid_rules) {
                Some(rule) => issue(IssueKind::InvalidValue(rule.to_string())),
                None => StdValue::Number(convert_unit(x, map.scale, map.offset)),
            },
            _ => issue(IssueKind::NonNumeric),
        },
        ValueKind::Categorical => match plan.codebook {
            None => StdValue::Label(trimmed.to_owned()),
            Some(cb) => match apply_codebook(trimmed, cb) {
                Ok(Some(label)) => StdValue::Label(label),
                Ok(None) => {
                    report.declared_missing += 1;
                    StdValue::Missing
                }
                Err(_) => issue(IssueKind::UnknownCode),
            },
        },
        ValueKind::Text => StdValue::Text(trimmed.to_owned()),
    }
}

/// Applies a map column's invalid rules and unit conversion to every data
/// cell. Returns the converted grid and the number of cells invalidated.
pub fn standardize_raster(grid: &RasterGrid, map: &ColumnMap) -> (RasterGrid, usize) {
    let mut invalidated = 0;
    let out = grid.map_values(|v| match firing_rule(v, &map.invalid_rules) {
        Some(_) => {
            invalidated += 1;
            None
        }
        None => Some(convert_unit(v, map.scale, map.offset)),
    });
    (out, invalidated)
}

/// Per-column sidecar metadata of a standardized table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub target: String,
    pub value_kind: ValueKind,
    #[serde(default)]
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedMeta {
    pub dataset_id: String,
    pub columns: Vec<ColumnMeta>,
}

impl StandardizedMeta {
    pub fn for_schema(schema: &FusionSchema) -> Self {
        let columns = schema
            .column_maps
            .iter()
            .flat_map(|m| {
                m.source.columns().iter().map(move |c| ColumnMeta {
                    name: c.clone(),
                    target: m.target.clone(),
                    value_kind: m.value_kind,
                    unit: m.unit.clone(),
                    codebook: m.codebook.clone(),
                })
            })
            .collect();
        StandardizedMeta { dataset_id: schema.dataset_id.clone(), columns }
    }
}

/// Renders records in the standardized CSV layout:
/// `record_id,survey,lon,lat,<mapped columns...>`, missing as empty.
pub fn write_standardized_csv(records: &[StandardizedRecord], meta: &StandardizedMeta, default_survey: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = RESERVED_COLUMNS.to_vec();
    header.extend(meta.columns.iter().map(|c| c.name.as_str()));
    w.write_record(&header)?;
    for rec in records {
        let mut row = vec![
            rec.record_id.clone(),
            rec.survey.clone().unwrap_or_else(|| default_survey.to_owned()),
            rec.georef.map(|p| p.lon.to_string()).unwrap_or_default(),
            rec.georef.map(|p| p.lat.to_string()).unwrap_or_default(),
        ];
        for col in &meta.columns {
            row.push(match rec.values.get(&col.name) {
                Some(StdValue::Number(x)) => x.to_string(),
                Some(StdValue::Label(s)) | Some(StdValue::Text(s)) => s.clone(),
                Some(StdValue::Missing) | None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Document(e.to_string()))?).expect("csv is utf-8"))
}

/// Parses a standardized CSV back into records using its sidecar metadata.
pub fn read_standardized_csv<R: Read>(reader: R, meta: &StandardizedMeta) -> Result<Vec<StandardizedRecord>> {
    let raw = RawTable::from_csv(reader)?;
    let col = |name: &str| {
        raw.column(name).ok_or_else(|| Error::HeaderMismatch {
            dataset: meta.dataset_id.clone(),
            reason: format!("standardized column `{name}` missing"),
        })
    };
    let (id_idx, survey_idx, lon_idx, lat_idx) = (col("record_id")?, col("survey")?, col("lon")?, col("lat")?);
    let value_idx = meta.columns.iter().map(|c| col(&c.name)).collect::<Result<Vec<_>>>()?;

    let mut records = Vec::with_capacity(raw.rows.len());
    for (row_no, row) in raw.rows.iter().enumerate() {
        let mut values = BTreeMap::new();
        for (c, &idx) in meta.columns.iter().zip(&value_idx) {
            let cell = row[idx].as_str();
            let value = if cell.is_empty() {
                StdValue::Missing
            } else {
                match c.value_kind {
                    ValueKind::Numeric => match cell.parse::<f64>() {
                        Ok(x) if x.is_finite() => StdValue::Number(x),
                        _ => {
                            return Err(Error::Document(format!(
                                "row {row_no}, column `{}`: `{cell}` is not a number",
                                c.name
                            )))
                        }
                    },
                    ValueKind::Categorical => StdValue::Label(cell.to_owned()),
                    ValueKind::Text => StdValue::Text(cell.to_owned()),
                }
            };
            values.insert(c.name.clone(), value);
        }
        records.push(StandardizedRecord {
            record_id: row[id_idx].clone(),
            survey: Some(row[survey_idx].clone()).filter(|s| !s.is_empty()),
            georef: parse_georef(&row[lon_idx], &row[lat_idx]),
            values,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn lc_codebook() -> Codebook {
        Codebook {
            id: "lc".into(),
            mapping: [("1", "cropland"), ("2", "forest")].into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
            missing_codes: BTreeSet::from(["-999".to_owned()]),
        }
    }

    fn raw(header: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable::new(
            header.iter().map(|s| s.to_string()).collect(),
            rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        )
        .unwrap()
    }

    fn survey_schema() -> FusionSchema {
        let mut s = FusionSchema::sample_structured(
            "survey",
            "lon",
            "lat",
            vec![
                ColumnMap::new("ph", "ph_h2o").with_rules(&[InvalidRule::EqualsSentinel(0.0)]),
                ColumnMap::new("oc", "soc").with_conversion(0.1, 0.0),
                ColumnMap::categorical("lc", "land_cover", Some("lc")),
            ],
        );
        s.id_column = Some("id".into());
        s
    }

    fn codebooks() -> BTreeMap<String, Codebook> {
        BTreeMap::from([("lc".to_owned(), lc_codebook())])
    }

    #[test]
    fn codebook_lookup() {
        let cb = lc_codebook();
        assert_eq!(apply_codebook("1", &cb).unwrap().as_deref(), Some("cropland"));
        assert_eq!(apply_codebook("-999", &cb).unwrap(), None);
        assert!(matches!(apply_codebook("7", &cb), Err(Error::UnknownCode { .. })));
    }

    #[test]
    fn invalid_numeric_rules() {
        assert_eq!(detect_invalid_numeric(0.0, &[InvalidRule::EqualsSentinel(0.0)]), None);
        assert_eq!(detect_invalid_numeric(6.5, &[InvalidRule::EqualsSentinel(0.0)]), Some(6.5));
        assert_eq!(detect_invalid_numeric(-1.0, &[InvalidRule::Below(0.0)]), None);
        assert_eq!(detect_invalid_numeric(0.0, &[InvalidRule::Below(0.0)]), Some(0.0));
    }

    #[test]
    fn unit_conversion() {
        assert!((convert_unit(25.0, 0.1, 0.0) - 2.5).abs() < 1e-12);
        assert_eq!(convert_unit(3.75, 1.0, 0.0), 3.75);
        assert_eq!(convert_unit(0.0, 1.0, 273.15), 273.15);
    }

    #[test]
    fn three_rows_one_sentinel() {
        let t = raw(
            &["id", "lon", "lat", "ph", "oc", "lc"],
            &[
                &["a", "10.0", "50.0", "6.5", "25", "1"],
                &["b", "10.1", "50.1", "0.0", "30", "2"],
                &["c", "10.2", "50.2", "7.1", "12", "1"],
            ],
        );
        let out = standardize_table(&t, &survey_schema(), &codebooks()).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.records[1].values["ph"], StdValue::Missing);
        assert_eq!(out.records[0].values["oc"], StdValue::Number(2.5));
        assert_eq!(out.records[2].values["lc"], StdValue::Label("cropland".into()));
        assert_eq!(out.report.entries.len(), 1);
        let e = &out.report.entries[0];
        assert_eq!((e.row, e.column.as_str(), e.action), (1, "ph", IssueAction::SetMissing));
        assert_eq!(e.kind, IssueKind::InvalidValue("equals_sentinel(0)".into()));
    }

    #[test]
    fn empty_table_is_vacuous() {
        let out = standardize_table(&RawTable::default(), &survey_schema(), &codebooks()).unwrap();
        assert!(out.records.is_empty());
        assert!(out.report.entries.is_empty());
    }

    #[test]
    fn unknown_code_degrades_to_missing() {
        let t = raw(&["id", "lon", "lat", "ph", "oc", "lc"], &[&["a", "10.0", "50.0", "6.5", "25", "7"]]);
        let out = standardize_table(&t, &survey_schema(), &codebooks()).unwrap();
        assert_eq!(out.records[0].values["lc"], StdValue::Missing);
        assert_eq!(out.report.entries.len(), 1);
        assert_eq!(out.report.entries[0].kind, IssueKind::UnknownCode);
    }

    #[test]
    fn declared_missing_precedes_rules() {
        let mut schema = survey_schema();
        schema.column_maps[0].missing_codes = vec!["-999".into()];
        schema.column_maps[0].invalid_rules.push(InvalidRule::Below(0.0));
        let t = raw(&["id", "lon", "lat", "ph", "oc", "lc"], &[&["a", "10.0", "50.0", "-999", "", "-999"]]);
        let out = standardize_table(&t, &schema, &codebooks()).unwrap();
        assert!(out.report.entries.is_empty());
        assert_eq!(out.report.declared_missing, 3);
    }

    #[test]
    fn header_mismatch_is_fatal() {
        let t = raw(&["id", "lon", "lat", "ph", "lc"], &[&["a", "10.0", "50.0", "6.5", "1"]]);
        assert!(matches!(standardize_table(&t, &survey_schema(), &codebooks()), Err(Error::HeaderMismatch { .. })));
    }

    #[test]
    fn missing_codebook_is_fatal() {
        let t = raw(&["id", "lon", "lat", "ph", "oc", "lc"], &[]);
        assert!(matches!(standardize_table(&t, &survey_schema(), &BTreeMap::new()), Err(Error::UnknownCodebook(_))));
    }

    #[test]
    fn bad_georef_reported() {
        let t = raw(&["id", "lon", "lat", "ph", "oc", "lc"], &[&["a", "x", "95", "6.5", "25", "1"]]);
        let out = standardize_table(&t, &survey_schema(), &codebooks()).unwrap();
        assert!(out.records[0].georef.is_none());
        assert_eq!(out.report.entries[0].action, IssueAction::GeorefUnset);
        assert_eq!(out.report.set_missing_count(), 0);
    }

    #[test]
    fn standardized_csv_roundtrip() {
        let t = raw(
            &["id", "lon", "lat", "ph", "oc", "lc"],
            &[&["a", "10.0", "50.0", "6.5", "25", "1"], &["b", "10.1", "50.1", "0.0", "", "2"]],
        );
        let schema = survey_schema();
        let out = standardize_table(&t, &schema, &codebooks()).unwrap();
        let meta = StandardizedMeta::for_schema(&schema);
        let text = write_standardized_csv(&out.records, &meta, schema.survey_label()).unwrap();
        let back = read_standardized_csv(text.as_bytes(), &meta).unwrap();
        for (a, b) in out.records.iter().zip(&back) {
            assert_eq!(a.values, b.values);
            assert_eq!(a.georef, b.georef);
            assert_eq!(a.record_id, b.record_id);
        }
    }

    #[test]
    fn raster_standardization() {
        let grid = parse_portable_raster("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata_value -1\n0 50\n").unwrap();
        let map = ColumnMap::new("g.asc", "t").with_rules(&[InvalidRule::EqualsSentinel(0.0)]).with_conversion(0.1, 0.0);
        let (out, bad) = standardize_raster(&grid, &map);
        assert_eq!(bad, 1);
        assert_eq!(out.values(), &[-1.0, 5.0]);
    }
}

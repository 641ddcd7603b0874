//! Declarative fusion schemas, one per source dataset.
//!
//! Schemas are TOML documents:
//!
//! ```toml
//! dataset_id = "lucas_topsoil"
//! kind = "sample_structured"
//! survey = "LUCAS 2018"
//! id_column = "point_id"
//! georef_columns = ["lon", "lat"]
//!
//! [[column_maps]]
//! source = "ph_h2o"
//! target = "ph_h2o"
//! invalid_rules = [{ equals_sentinel = 0.0 }]
//!
//! [[column_maps]]
//! source = ["prec_01", "prec_02"]   # several columns assemble a vector feature
//! target = "precipitation"
//! ```

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SourceKind;

/// Rule marking a parsed number as an invalid placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InvalidRule {
    EqualsSentinel(f64),
    Below(f64),
    Above(f64),
}

impl InvalidRule {
    /// Whether the rule marks `value` invalid. Thresholds are strict.
    pub fn fires(&self, value: f64) -> bool {
        match *self {
            InvalidRule::EqualsSentinel(s) => value == s,
            InvalidRule::Below(min) => value < min,
            InvalidRule::Above(max) => value > max,
        }
    }

    fn threshold(&self) -> f64 {
        match *self {
            InvalidRule::EqualsSentinel(x) | InvalidRule::Below(x) | InvalidRule::Above(x) => x,
        }
    }
}

impl std::fmt::Display for InvalidRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InvalidRule::EqualsSentinel(x) => write!(f, "equals_sentinel({x})"),
            InvalidRule::Below(x) => write!(f, "below({x})"),
            InvalidRule::Above(x) => write!(f, "above({x})"),
        }
    }
}

/// How the standardizer interprets a mapped column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    #[default]
    Numeric,
    Categorical,
    Text,
}

/// One source column, or an ordered list of columns forming a vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceRef {
    Column(String),
    Columns(Vec<String>),
}

impl SourceRef {
    pub fn columns(&self) -> &[String] {
        match self {
            SourceRef::Column(c) => std::slice::from_ref(c),
            SourceRef::Columns(cs) => cs,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    /// Source column(s) for tables; raster file name(s) for map sources.
    pub source: SourceRef,
    pub target: String,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub value_kind: ValueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook: Option<String>,
    /// Raw strings that declare a missing measurement, resolved before any rule.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_codes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invalid_rules: Vec<InvalidRule>,
    /// Unit of the converted values.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub unit: String,
}

impl ColumnMap {
    pub fn new(source: &str, target: &str) -> Self {
        ColumnMap {
            source: SourceRef::Column(source.to_owned()),
            target: target.to_owned(),
            scale: 1.0,
            offset: 0.0,
            value_kind: ValueKind::Numeric,
            codebook: None,
            missing_codes: Vec::new(),
            invalid_rules: Vec::new(),
            unit: String::new(),
        }
    }

    pub fn vector(sources: &[&str], target: &str) -> Self {
        ColumnMap { source: SourceRef::Columns(sources.iter().map(|s| s.to_string()).collect()), ..Self::new("", target) }
    }

    pub fn categorical(source: &str, target: &str, codebook: Option<&str>) -> Self {
        ColumnMap {
            value_kind: ValueKind::Categorical,
            codebook: codebook.map(str::to_owned),
            ..Self::new(source, target)
        }
    }

    pub fn with_rules(mut self, rules: &[InvalidRule]) -> Self {
        self.invalid_rules = rules.to_vec();
        self
    }

    pub fn with_conversion(mut self, scale: f64, offset: f64) -> Self {
        self.scale = scale;
        self.offset = offset;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSchema {
    pub dataset_id: String,
    pub kind: SourceKind,
    /// Native resolution of map sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_m: Option<f64>,
    /// Long-term past or future projection product.
    #[serde(default)]
    pub long_term_projection: bool,
    /// Survey label assigned to created samples; defaults to the dataset id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey: Option<String>,
    /// Column holding a per-record survey label, overriding `survey`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey_column: Option<String>,
    /// Column holding the source record id; row numbers are used otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub georef_columns: Option<(String, String)>,
    #[serde(default)]
    pub column_maps: Vec<ColumnMap>,
}

impl FusionSchema {
    pub fn sample_structured(dataset_id: &str, lon: &str, lat: &str, column_maps: Vec<ColumnMap>) -> Self {
        FusionSchema {
            dataset_id: dataset_id.to_owned(),
            kind: SourceKind::SampleStructured,
            resolution_m: None,
            long_term_projection: false,
            survey: None,
            survey_column: None,
            id_column: None,
            georef_columns: Some((lon.to_owned(), lat.to_owned())),
            column_maps,
        }
    }

    pub fn map_structured(dataset_id: &str, resolution_m: f64, column_maps: Vec<ColumnMap>) -> Self {
        FusionSchema {
            dataset_id: dataset_id.to_owned(),
            kind: SourceKind::MapStructured,
            resolution_m: Some(resolution_m),
            long_term_projection: false,
            survey: None,
            survey_column: None,
            id_column: None,
            georef_columns: None,
            column_maps,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: FusionSchema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: FusionSchema = toml::from_str(&text)?;
        Ok(schema)
    }

    pub fn survey_label(&self) -> &str {
        self.survey.as_deref().unwrap_or(&self.dataset_id)
    }

    /// Structural checks. Missing georeference on a sample-structured schema is
    /// reported here but is normally caught earlier by screening.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidSchema { dataset: self.dataset_id.clone(), reason });
        if self.dataset_id.trim().is_empty() {
            return fail("empty dataset id".into());
        }
        if self.kind == SourceKind::SampleStructured && self.georef_columns.is_none() {
            return fail("sample-structured schema without georef_columns".into());
        }
        if let Some(r) = self.resolution_m {
            if !(r.is_finite() && r > 0.0) {
                return fail(format!("resolution_m must be positive, got {r}"));
            }
        }
        let mut targets = HashSet::new();
        for map in &self.column_maps {
            if !targets.insert(map.target.as_str()) {
                return fail(format!("target `{}` mapped twice", map.target));
            }
            let columns = map.source.columns();
            if columns.is_empty() || columns.iter().any(|c| c.is_empty()) {
                return fail(format!("empty source for target `{}`", map.target));
            }
            if matches!(map.source, SourceRef::Columns(_)) && map.value_kind != ValueKind::Numeric {
                return fail(format!("multi-column source for non-numeric target `{}`", map.target));
            }
            if !(map.scale.is_finite() && map.scale != 0.0 && map.offset.is_finite()) {
                return fail(format!("invalid conversion for target `{}`", map.target));
            }
            if map.invalid_rules.iter().any(|r| !r.threshold().is_finite()) {
                return fail(format!("non-finite rule threshold for target `{}`", map.target));
            }
            if map.codebook.is_some() && map.value_kind != ValueKind::Categorical {
                return fail(format!("codebook on non-categorical target `{}`", map.target));
            }
        }
        Ok(())
    }
}

//! Domain types for the fused sample–feature table.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::location_key;
use crate::GeoPoint;

/// Structural type of a feature's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    ScalarNum,
    VectorNum { dim: usize },
    Categorical,
    Text,
    ImageRef,
}

impl Modality {
    pub fn tag(&self) -> &'static str {
        match self {
            Modality::ScalarNum => "scalar_num",
            Modality::VectorNum { .. } => "vector_num",
            Modality::Categorical => "categorical",
            Modality::Text => "text",
            Modality::ImageRef => "image_ref",
        }
    }

    /// Number of numeric columns the feature occupies (0 for non-numeric).
    pub fn numeric_dims(&self) -> usize {
        match self {
            Modality::ScalarNum => 1,
            Modality::VectorNum { dim } => *dim,
            _ => 0,
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.numeric_dims() > 0
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::VectorNum { dim } => write!(f, "vector_num[{dim}]"),
            other => f.write_str(other.tag()),
        }
    }
}

/// Column definition of the fused table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureDefDoc", into = "FeatureDefDoc")]
pub struct FeatureDef {
    pub id: String,
    pub name: String,
    pub unit: String,
    pub theme: String,
    pub modality: Modality,
    /// Ordered labels; non-empty iff the modality is categorical.
    pub vocabulary: Vec<String>,
    pub annotation: String,
}

impl FeatureDef {
    fn bare(id: &str, name: &str, unit: &str, theme: &str, modality: Modality) -> Self {
        FeatureDef {
            id: id.to_owned(),
            name: name.to_owned(),
            unit: unit.to_owned(),
            theme: theme.to_owned(),
            modality,
            vocabulary: Vec::new(),
            annotation: String::new(),
        }
    }

    pub fn scalar(id: &str, name: &str, unit: &str, theme: &str) -> Self {
        Self::bare(id, name, unit, theme, Modality::ScalarNum)
    }

    pub fn vector(id: &str, name: &str, unit: &str, theme: &str, dim: usize) -> Self {
        Self::bare(id, name, unit, theme, Modality::VectorNum { dim })
    }

    pub fn categorical<S: AsRef<str>>(id: &str, name: &str, theme: &str, vocabulary: &[S]) -> Self {
        let mut def = Self::bare(id, name, "", theme, Modality::Categorical);
        def.vocabulary = vocabulary.iter().map(|s| s.as_ref().to_owned()).collect();
        def
    }

    pub fn text(id: &str, name: &str, theme: &str) -> Self {
        Self::bare(id, name, "", theme, Modality::Text)
    }

    pub fn image_ref(id: &str, name: &str, theme: &str) -> Self {
        Self::bare(id, name, "", theme, Modality::ImageRef)
    }

    pub fn with_annotation(mut self, annotation: &str) -> Self {
        self.annotation = annotation.to_owned();
        self
    }

    pub fn vector_dim(&self) -> Option<usize> {
        match self.modality {
            Modality::VectorNum { dim } => Some(dim),
            _ => None,
        }
    }

    /// Position of `label` in the vocabulary.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.vocabulary.iter().position(|l| l == label)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| Err(Error::InvalidFeature { id: self.id.clone(), reason: reason.to_owned() });
        if self.id.trim().is_empty() {
            return fail("empty id");
        }
        if let Modality::VectorNum { dim } = self.modality {
            if dim < 2 {
                return fail("vector dimension must be at least 2");
            }
        }
        match (self.modality == Modality::Categorical, self.vocabulary.is_empty()) {
            (true, true) => return fail("categorical feature without vocabulary"),
            (false, false) => return fail("vocabulary on a non-categorical feature"),
            _ => {}
        }
        let mut seen = HashSet::new();
        for label in &self.vocabulary {
            if label.is_empty() {
                return fail("empty vocabulary label");
            }
            if !seen.insert(label.as_str()) {
                return fail("duplicate vocabulary label");
            }
        }
        Ok(())
    }
}

/// Flat on-disk spelling of a [`FeatureDef`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureDefDoc {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    unit: String,
    #[serde(default)]
    theme: String,
    modality: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vector_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<Vec<String>>,
    #[serde(default)]
    annotation: String,
}

impl TryFrom<FeatureDefDoc> for FeatureDef {
    type Error = Error;

    fn try_from(doc: FeatureDefDoc) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidFeature { id: doc.id.clone(), reason };
        let modality = match (doc.modality.as_str(), doc.vector_dim) {
            ("scalar_num", None) => Modality::ScalarNum,
            ("vector_num", Some(dim)) => Modality::VectorNum { dim },
            ("vector_num", None) => return Err(invalid("vector_num requires vector_dim".into())),
            ("categorical", None) => Modality::Categorical,
            ("text", None) => Modality::Text,
            ("image_ref", None) => Modality::ImageRef,
            (tag, Some(_)) if ["scalar_num", "categorical", "text", "image_ref"].contains(&tag) => {
                return Err(invalid("vector_dim is only valid for vector_num".into()))
            }
            (tag, _) => return Err(invalid(format!("unknown modality `{tag}`"))),
        };
        let def = FeatureDef {
            name: if doc.name.is_empty() { doc.id.clone() } else { doc.name },
            id: doc.id,
            unit: doc.unit,
            theme: doc.theme,
            modality,
            vocabulary: doc.vocabulary.unwrap_or_default(),
            annotation: doc.annotation,
        };
        def.validate()?;
        Ok(def)
    }
}

impl From<FeatureDef> for FeatureDefDoc {
    fn from(def: FeatureDef) -> Self {
        FeatureDefDoc {
            modality: def.modality.tag().to_owned(),
            vector_dim: def.vector_dim(),
            vocabulary: (!def.vocabulary.is_empty()).then_some(def.vocabulary),
            id: def.id,
            name: def.name,
            unit: def.unit,
            theme: def.theme,
            annotation: def.annotation,
        }
    }
}

/// A single table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Category(String),
    Text(String),
    ImageRef(String),
    Missing,
}

impl CellValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, CellValue::Missing)
    }

    fn kind(&self) -> &'static str {
        match self {
            CellValue::Scalar(_) => "scalar",
            CellValue::Vector(_) => "vector",
            CellValue::Category(_) => "category",
            CellValue::Text(_) => "text",
            CellValue::ImageRef(_) => "image_ref",
            CellValue::Missing => "missing",
        }
    }
}

/// Why a cell does not fit its feature definition.
#[derive(Debug, Clone, PartialEq)]
pub enum CellViolation {
    ModalityMismatch { expected: String, found: &'static str },
    LengthMismatch { expected: usize, found: usize },
    LabelNotInVocabulary(String),
    NonFinite,
    EmptyReference,
}

impl fmt::Display for CellViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellViolation::ModalityMismatch { expected, found } => {
                write!(f, "modality mismatch: expected {expected}, found {found}")
            }
            CellViolation::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            CellViolation::LabelNotInVocabulary(label) => write!(f, "label not in vocabulary: `{label}`"),
            CellViolation::NonFinite => f.write_str("non-finite number"),
            CellViolation::EmptyReference => f.write_str("empty reference"),
        }
    }
}

impl std::error::Error for CellViolation {}

/// Checks a value against its feature definition. `Missing` always passes.
pub fn validate_cell(def: &FeatureDef, value: &CellValue) -> Result<(), CellViolation> {
    let mismatch = || CellViolation::ModalityMismatch { expected: def.modality.to_string(), found: value.kind() };
    match (&def.modality, value) {
        (_, CellValue::Missing) => Ok(()),
        (Modality::ScalarNum, CellValue::Scalar(x)) => {
            if x.is_finite() {
                Ok(())
            } else {
                Err(CellViolation::NonFinite)
            }
        }
        (Modality::VectorNum { dim }, CellValue::Vector(xs)) => {
            if xs.len() != *dim {
                Err(CellViolation::LengthMismatch { expected: *dim, found: xs.len() })
            } else if xs.iter().any(|x| !x.is_finite()) {
                Err(CellViolation::NonFinite)
            } else {
                Ok(())
            }
        }
        (Modality::Categorical, CellValue::Category(label)) => {
            if def.label_index(label).is_some() {
                Ok(())
            } else {
                Err(CellViolation::LabelNotInVocabulary(label.clone()))
            }
        }
        (Modality::Text, CellValue::Text(_)) => Ok(()),
        (Modality::ImageRef, CellValue::ImageRef(path)) => {
            if path.is_empty() {
                Err(CellViolation::EmptyReference)
            } else {
                Ok(())
            }
        }
        _ => Err(mismatch()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    SampleStructured,
    MapStructured,
}

impl SourceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceKind::SampleStructured => "sample_structured",
            SourceKind::MapStructured => "map_structured",
        }
    }
}

/// Where a cell came from and how far its source was from the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_dataset_id: String,
    pub source_kind: SourceKind,
    pub alignment_distance_m: f64,
}

impl Provenance {
    pub fn sample(dataset: &str) -> Self {
        Provenance {
            source_dataset_id: dataset.to_owned(),
            source_kind: SourceKind::SampleStructured,
            alignment_distance_m: 0.0,
        }
    }

    pub fn map(dataset: &str, distance_m: f64) -> Self {
        Provenance {
            source_dataset_id: dataset.to_owned(),
            source_kind: SourceKind::MapStructured,
            alignment_distance_m: distance_m,
        }
    }

    fn check(&self) -> Result<(), String> {
        let d = self.alignment_distance_m;
        if !d.is_finite() || d < 0.0 {
            return Err(format!("alignment distance {d} is not a finite non-negative number"));
        }
        if self.source_kind == SourceKind::SampleStructured && d != 0.0 {
            return Err(format!("sample-structured provenance with distance {d}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub value: CellValue,
    pub provenance: Provenance,
}

/// One soil observation: a location plus its observed feature cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: String,
    pub location: GeoPoint,
    pub source_survey: String,
    pub cells: BTreeMap<String, Cell>,
}

impl Sample {
    pub fn new(sample_id: &str, location: GeoPoint, source_survey: &str) -> Self {
        Sample {
            sample_id: sample_id.to_owned(),
            location,
            source_survey: source_survey.to_owned(),
            cells: BTreeMap::new(),
        }
    }

    /// Observed value of a feature, if any.
    pub fn value(&self, feature_id: &str) -> Option<&CellValue> {
        self.cells.get(feature_id).map(|c| &c.value).filter(|v| !v.is_missing())
    }
}

/// Raw code → label mapping with declared missing sentinels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Codebook {
    pub id: String,
    #[serde(default)]
    pub mapping: BTreeMap<String, String>,
    #[serde(default)]
    pub missing_codes: BTreeSet<String>,
}

impl Codebook {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidCodebook { id: self.id.clone(), reason });
        if let Some(code) = self.mapping.keys().find(|k| self.missing_codes.contains(*k)) {
            return fail(format!("code `{code}` is both mapped and declared missing"));
        }
        if let Some((code, _)) = self.mapping.iter().find(|(_, label)| label.is_empty()) {
            return fail(format!("code `{code}` maps to an empty label"));
        }
        Ok(())
    }

    /// Distinct labels in first-seen code order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for label in self.mapping.values() {
            if !out.contains(label) {
                out.push(label.clone());
            }
        }
        out
    }
}

/// The unified sample–feature table.
///
/// Samples are kept sorted by id; stored cells are never `Missing` (absence is
/// the lack of a cell). `claims` records which dataset owns each feature.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusedTable {
    features: Vec<FeatureDef>,
    feature_pos: HashMap<String, usize>,
    samples: Vec<Sample>,
    location_index: BTreeMap<String, Vec<String>>,
    claims: BTreeMap<String, String>,
}

impl FusedTable {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_features(features: Vec<FeatureDef>) -> Result<Self> {
        Self::new(features, Vec::new(), BTreeMap::new())
    }

    /// Validates and assembles a table. Missing cells are dropped.
    pub fn new(features: Vec<FeatureDef>, mut samples: Vec<Sample>, claims: BTreeMap<String, String>) -> Result<Self> {
        let mut feature_pos = HashMap::with_capacity(features.len());
        for (i, def) in features.iter().enumerate() {
            def.validate()?;
            if feature_pos.insert(def.id.clone(), i).is_some() {
                return Err(Error::DuplicateFeature(def.id.clone()));
            }
        }
        if let Some(f) = claims.keys().find(|f| !feature_pos.contains_key(*f)) {
            return Err(Error::UnknownFeature(f.clone()));
        }

        samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        for pair in samples.windows(2) {
            if pair[0].sample_id == pair[1].sample_id {
                return Err(Error::DuplicateSample(pair[0].sample_id.clone()));
            }
        }
        for sample in &mut samples {
            if !sample.location.is_valid() {
                return Err(Error::InvalidCoordinate { lon: sample.location.lon, lat: sample.location.lat });
            }
            sample.cells.retain(|_, c| !c.value.is_missing());
            for (fid, cell) in &sample.cells {
                let def = feature_pos.get(fid).map(|&i| &features[i]).ok_or_else(|| Error::UnknownFeature(fid.clone()))?;
                validate_cell(def, &cell.value).map_err(|violation| Error::InvalidCell {
                    sample: sample.sample_id.clone(),
                    feature: fid.clone(),
                    violation,
                })?;
                cell.provenance.check().map_err(|reason| Error::InvalidProvenance {
                    sample: sample.sample_id.clone(),
                    feature: fid.clone(),
                    reason,
                })?;
            }
        }

        let mut table = FusedTable { features, feature_pos, samples, location_index: BTreeMap::new(), claims };
        table.location_index = crate::fuse::build_location_index(&table);
        Ok(table)
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn feature(&self, id: &str) -> Option<&FeatureDef> {
        self.feature_pos.get(id).map(|&i| &self.features[i])
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, id: &str) -> Option<&Sample> {
        self.samples
            .binary_search_by(|s| s.sample_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.samples[i])
    }

    pub fn location_index(&self) -> &BTreeMap<String, Vec<String>> {
        &self.location_index
    }

    /// Feature id → dataset id that owns it.
    pub fn claims(&self) -> &BTreeMap<String, String> {
        &self.claims
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of stored (observed) cells.
    pub fn cell_count(&self) -> usize {
        self.samples.iter().map(|s| s.cells.len()).sum()
    }

    /// Adds feature definitions; existing ids are rejected.
    pub fn register_features(self, defs: impl IntoIterator<Item = FeatureDef>) -> Result<Self> {
        let (mut features, samples, claims) = self.into_parts();
        features.extend(defs);
        Self::new(features, samples, claims)
    }

    pub fn into_parts(self) -> (Vec<FeatureDef>, Vec<Sample>, BTreeMap<String, String>) {
        (self.features, self.samples, self.claims)
    }
}

/// Location key of a sample, shared by indexing, splitting and querying.
pub fn sample_location_key(sample: &Sample) -> String {
    location_key(&sample.location)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    #[test]
    fn scalar_cell_ok() {
        let def = FeatureDef::scalar("ph", "pH", "", "chemistry");
        assert!(validate_cell(&def, &CellValue::Scalar(6.5)).is_ok());
        assert_eq!(validate_cell(&def, &CellValue::Scalar(f64::NAN)), Err(CellViolation::NonFinite));
    }

    #[test]
    fn vector_length_mismatch() {
        let def = FeatureDef::vector("prec", "monthly precipitation", "mm", "climate", 12);
        let err = validate_cell(&def, &CellValue::Vector(vec![1.0; 7])).unwrap_err();
        assert!(err.to_string().contains("length mismatch"));
    }

    #[test]
    fn label_outside_vocabulary() {
        let def = FeatureDef::categorical("lc", "land cover", "land", &["cropland", "forest"]);
        assert!(validate_cell(&def, &CellValue::Category("forest".into())).is_ok());
        let err = validate_cell(&def, &CellValue::Category("urban".into())).unwrap_err();
        assert!(err.to_string().contains("label not in vocabulary"));
    }

    #[test]
    fn modality_mismatch_and_missing() {
        let def = FeatureDef::scalar("ph", "pH", "", "chemistry");
        assert!(matches!(
            validate_cell(&def, &CellValue::Category("x".into())),
            Err(CellViolation::ModalityMismatch { .. })
        ));
        assert!(validate_cell(&def, &CellValue::Missing).is_ok());
    }

    #[test]
    fn feature_def_invariants() {
        assert!(FeatureDef::vector("v", "v", "", "t", 1).validate().is_err());
        assert!(FeatureDef::categorical::<&str>("c", "c", "t", &[]).validate().is_err());
        assert!(FeatureDef::categorical("c", "c", "t", &["a", "a"]).validate().is_err());
        let mut scalar = FeatureDef::scalar("s", "s", "", "t");
        scalar.vocabulary.push("a".into());
        assert!(scalar.validate().is_err());
    }

    #[test]
    fn feature_doc_roundtrip_via_toml() {
        let src = r#"
            id = "prec"
            name = "monthly precipitation"
            unit = "mm"
            theme = "climate"
            modality = "vector_num"
            vector_dim = 12
        "#;
        let def: FeatureDef = toml::from_str(src).unwrap();
        assert_eq!(def.modality, Modality::VectorNum { dim: 12 });
        let json = serde_json::to_string(&def).unwrap();
        let back: FeatureDef = serde_json::from_str(&json).unwrap();
        assert_eq!(def, back);

        let bad = "id = \"x\"\nmodality = \"scalar_num\"\nvector_dim = 3\n";
        assert!(toml::from_str::<FeatureDef>(bad).is_err());
    }

    #[test]
    fn codebook_disjointness() {
        let mut cb = Codebook { id: "lc".into(), mapping: BTreeMap::new(), missing_codes: BTreeSet::new() };
        cb.mapping.insert("1".into(), "cropland".into());
        cb.missing_codes.insert("1".into());
        assert!(cb.validate().is_err());
        cb.missing_codes.clear();
        cb.missing_codes.insert("-999".into());
        assert!(cb.validate().is_ok());
    }

    #[test]
    fn table_rejects_invalid_cells_and_drops_missing() {
        let defs = vec![FeatureDef::scalar("ph", "pH", "", "chemistry")];
        let mut s = Sample::new("s1", pt(10.0, 50.0), "survey");
        s.cells.insert("ph".into(), Cell { value: CellValue::Missing, provenance: Provenance::sample("d") });
        let table = FusedTable::new(defs.clone(), vec![s.clone()], BTreeMap::new()).unwrap();
        assert_eq!(table.cell_count(), 0);

        s.cells.insert("ph".into(), Cell { value: CellValue::Vector(vec![1.0, 2.0]), provenance: Provenance::sample("d") });
        assert!(matches!(FusedTable::new(defs.clone(), vec![s.clone()], BTreeMap::new()), Err(Error::InvalidCell { .. })));

        s.cells.insert("ph".into(), Cell { value: CellValue::Scalar(6.0), provenance: Provenance::map("d", -1.0) });
        assert!(matches!(FusedTable::new(defs.clone(), vec![s.clone()], BTreeMap::new()), Err(Error::InvalidProvenance { .. })));

        s.cells.insert("other".into(), Cell { value: CellValue::Scalar(6.0), provenance: Provenance::sample("d") });
        s.cells.remove("ph");
        assert!(matches!(FusedTable::new(defs, vec![s], BTreeMap::new()), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn table_sorts_samples_and_rejects_duplicates() {
        let samples = vec![Sample::new("b", pt(1.0, 1.0), "x"), Sample::new("a", pt(1.0, 1.0), "x")];
        let table = FusedTable::new(vec![], samples, BTreeMap::new()).unwrap();
        assert_eq!(table.samples()[0].sample_id, "a");
        assert!(table.sample("b").is_some());
        assert!(table.sample("c").is_none());

        let dup = vec![Sample::new("a", pt(1.0, 1.0), "x"), Sample::new("a", pt(2.0, 1.0), "x")];
        assert!(matches!(FusedTable::new(vec![], dup, BTreeMap::new()), Err(Error::DuplicateSample(_))));
    }
}

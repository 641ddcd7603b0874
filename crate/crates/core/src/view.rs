//! Training view: feature filtering, location-level splits and z-scoring.
//!
//! A persisted view is a directory of plain text files:
//!
//! | file                    | content                                            |
//! |-------------------------|----------------------------------------------------|
//! | `manifest.json`         | kept features, column layout, split parameters     |
//! | `numeric.csv`           | `sample_id` + z-scored numeric dims, missing as 0  |
//! | `numeric_mask.csv`      | `sample_id` + 1 observed / 0 missing per dim       |
//! | `categorical.csv`       | `sample_id` + vocabulary index per feature         |
//! | `categorical_mask.csv`  | `sample_id` + 1 observed / 0 missing per feature   |
//! | `visual.csv`            | `sample_id` + asset reference per visual feature   |
//! | `normalization.csv`     | `column,mean,std` (train split, population std)    |
//! | `splits.csv`            | `sample_id,split`                                  |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::availability::{compute_availability, summarize_alignment};
use crate::error::{Error, Result};
use crate::model::{CellValue, FeatureDef, FusedTable, Modality};
use crate::num::Scalar;

pub const VIEW_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_avail: f64,
    pub max_align_m: f64,
    /// Modality tags (`text`, `image_ref`, ...) never admitted.
    pub drop_modalities: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { min_avail: 0.5, max_align_m: 200.0, drop_modalities: vec!["text".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum ExclusionRule {
    LowAvailability { availability: f64, min: f64 },
    AlignmentTooLarge { max_alignment_m: f64, limit_m: f64 },
    DroppedModality { modality: String },
    ConstantColumn { column: String },
}

impl fmt::Display for ExclusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionRule::LowAvailability { availability, min } => write!(f, "availability {availability} < {min}"),
            ExclusionRule::AlignmentTooLarge { max_alignment_m, limit_m } => {
                write!(f, "max alignment {max_alignment_m} m > {limit_m} m")
            }
            ExclusionRule::DroppedModality { modality } => write!(f, "modality {modality} dropped"),
            ExclusionRule::ConstantColumn { column } => write!(f, "constant column {column} in training split"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub feature_id: String,
    pub rules: Vec<ExclusionRule>,
}

/// Keeps a feature iff availability ≥ `min_avail`, max alignment ≤
/// `max_align_m` and its modality is not dropped. Every failed rule is reported.
pub fn filter_training_view(table: &FusedTable, config: &FilterConfig) -> Result<(Vec<FeatureDef>, Vec<Exclusion>)> {
    if !(config.min_avail > 0.0 && config.max_align_m > 0.0) {
        return Err(Error::InvalidArgument("filter thresholds must be positive".into()));
    }
    let availability = compute_availability(table);
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for def in table.features() {
        let mut rules = Vec::new();
        let avail = availability.per_feature[&def.id];
        if avail < config.min_avail {
            rules.push(ExclusionRule::LowAvailability { availability: avail, min: config.min_avail });
        }
        if let Some(summary) = summarize_alignment(table, &def.id) {
            if summary.max > config.max_align_m {
                rules.push(ExclusionRule::AlignmentTooLarge { max_alignment_m: summary.max, limit_m: config.max_align_m });
            }
        }
        if config.drop_modalities.iter().any(|m| m == def.modality.tag()) {
            rules.push(ExclusionRule::DroppedModality { modality: def.modality.tag().to_owned() });
        }
        if rules.is_empty() {
            kept.push(def.clone());
        } else {
            excluded.push(Exclusion { feature_id: def.id.clone(), rules });
        }
    }
    Ok((kept, excluded))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

/// Shuffles unique location keys with `seed` and assigns the first
/// `floor(eval_fraction · n_locations)` to eval. Co-located samples share a tag.
pub fn split_by_location(table: &FusedTable, eval_fraction: f64, seed: u64) -> Result<BTreeMap<String, Split>> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("eval_fraction must be in (0, 1), got {eval_fraction}")));
    }
    let mut keys: Vec<&String> = table.location_index().keys().collect();
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_eval = (eval_fraction * keys.len() as f64).floor() as usize;

    let mut out = BTreeMap::new();
    for (i, key) in keys.into_iter().enumerate() {
        let tag = if i < n_eval { Split::Eval } else { Split::Train };
        for id in &table.location_index()[key] {
            out.insert(id.clone(), tag);
        }
    }
    Ok(out)
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization<T> {
    pub columns: Vec<String>,
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

/// Mean and population std of `values`; `None` with fewer than two distinct values.
pub fn column_stats<T: Scalar>(values: &[T]) -> Option<(T, T)> {
    let first = *values.first()?;
    if values.iter().all(|&v| v == first) {
        return None;
    }
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().fold(T::zero(), |acc, &v| acc + v) / n;
    let var = values.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / n;
    Some((mean, var.sqrt()))
}

/// Fits statistics on observed train cells and z-scores every observed cell.
/// Missing cells (mask `false`) are left untouched.
pub fn fit_apply_zscore<T: Scalar>(
    values: &[Vec<T>],
    mask: &[Vec<bool>],
    splits: &[Split],
    columns: &[String],
) -> Result<(Normalization<T>, Vec<Vec<T>>)> {
    if values.len() != mask.len() || values.len() != splits.len() {
        return Err(Error::InvalidArgument("values, mask and splits differ in length".into()));
    }
    if values.iter().any(|r| r.len() != columns.len()) || mask.iter().any(|r| r.len() != columns.len()) {
        return Err(Error::InvalidArgument("row width differs from column count".into()));
    }
    let mut stats = Normalization { columns: columns.to_vec(), mean: Vec::new(), std: Vec::new() };
    for (j, name) in columns.iter().enumerate() {
        let train: Vec<T> = (0..values.len())
            .filter(|&i| mask[i][j] && splits[i] == Split::Train)
            .map(|i| values[i][j])
            .collect();
        let (mean, std) = column_stats(&train).ok_or_else(|| Error::ConstantColumn(name.clone()))?;
        stats.mean.push(mean);
        stats.std.push(std);
    }
    let out = values
        .iter()
        .zip(mask)
        .map(|(row, m)| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| if m[j] { (v - stats.mean[j]) / stats.std[j] } else { v })
                .collect()
        })
        .collect();
    Ok((stats, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericColumn {
    pub name: String,
    pub feature_id: String,
    /// 1-based component of a vector feature.
    pub component: Option<usize>,
}

/// Filtered, z-scored, split matrix view of a fused table.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingView {
    pub sample_ids: Vec<String>,
    pub kept_features: Vec<FeatureDef>,
    pub numeric_columns: Vec<NumericColumn>,
    /// Rows × numeric dims, z-scored; missing entries hold 0.
    pub numeric: Vec<Vec<f64>>,
    pub numeric_mask: Vec<Vec<bool>>,
    pub categorical_features: Vec<String>,
    /// Rows × categorical features, vocabulary indices; missing entries hold 0.
    pub categorical: Vec<Vec<usize>>,
    pub categorical_mask: Vec<Vec<bool>>,
    pub visual_features: Vec<String>,
    /// Rows × visual features, asset references.
    pub visual_refs: Vec<Vec<Option<String>>>,
    pub splits: Vec<Split>,
    pub normalization: Normalization<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub filter: FilterConfig,
    pub eval_fraction: f64,
    pub seed: u64,
}

impl Default for ViewParams {
    fn default() -> Self {
        ViewParams { filter: FilterConfig::default(), eval_fraction: 0.1, seed: 0 }
    }
}

fn numeric_column_names(def: &FeatureDef) -> Vec<NumericColumn> {
    match def.modality {
        Modality::ScalarNum => vec![NumericColumn { name: def.id.clone(), feature_id: def.id.clone(), component: None }],
        Modality::VectorNum { dim } => (1..=dim)
            .map(|i| NumericColumn { name: format!("{}_{i}", def.id), feature_id: def.id.clone(), component: Some(i) })
            .collect(),
        _ => Vec::new(),
    }
}

/// Raw (un-normalized) numeric matrix and mask for the given columns.
fn numeric_matrix(table: &FusedTable, columns: &[NumericColumn]) -> (Vec<Vec<f64>>, Vec<Vec<bool>>) {
    let mut values = Vec::with_capacity(table.len());
    let mut mask = Vec::with_capacity(table.len());
    for sample in table.samples() {
        let (row, m): (Vec<f64>, Vec<bool>) = columns
            .iter()
            .map(|c| match (sample.value(&c.feature_id), c.component) {
                (Some(CellValue::Scalar(x)), None) => (*x, true),
                (Some(CellValue::Vector(xs)), Some(i)) => (xs[i - 1], true),
                _ => (0.0, false),
            })
            .unzip();
        values.push(row);
        mask.push(m);
    }
    (values, mask)
}

/// Filters, splits and z-scores a table. Numeric features with a dimension
/// that has fewer than two distinct training values are excluded as constant.
pub fn build_training_view(table: &FusedTable, params: &ViewParams) -> Result<(TrainingView, Vec<Exclusion>)> {
    let (kept, mut exclusions) = filter_training_view(table, &params.filter)?;
    let split_map = split_by_location(table, params.eval_fraction, params.seed)?;
    let splits: Vec<Split> = table.samples().iter().map(|s| split_map[&s.sample_id]).collect();

    let mut features = Vec::new();
    for def in kept {
        let cols = numeric_column_names(&def);
        if !cols.is_empty() {
            let (values, mask) = numeric_matrix(table, &cols);
            let constant = (0..cols.len()).find(|&j| {
                let train: Vec<f64> =
                    (0..values.len()).filter(|&i| mask[i][j] && splits[i] == Split::Train).map(|i| values[i][j]).collect();
                column_stats(&train).is_none()
            });
            if let Some(j) = constant {
                exclusions.push(Exclusion {
                    feature_id: def.id.clone(),
                    rules: vec![ExclusionRule::ConstantColumn { column: cols[j].name.clone() }],
                });
                continue;
            }
        }
        features.push(def);
    }

    let numeric_columns: Vec<NumericColumn> = features.iter().flat_map(numeric_column_names).collect();
    let (raw, numeric_mask) = numeric_matrix(table, &numeric_columns);
    let names: Vec<String> = numeric_columns.iter().map(|c| c.name.clone()).collect();
    let (normalization, numeric) = fit_apply_zscore(&raw, &numeric_mask, &splits, &names)?;

    let cat_defs: Vec<&FeatureDef> = features.iter().filter(|f| f.modality == Modality::Categorical).collect();
    let vis_defs: Vec<&FeatureDef> = features.iter().filter(|f| f.modality == Modality::ImageRef).collect();
    let mut categorical = Vec::with_capacity(table.len());
    let mut categorical_mask = Vec::with_capacity(table.len());
    let mut visual_refs = Vec::with_capacity(table.len());
    for sample in table.samples() {
        let (row, m): (Vec<usize>, Vec<bool>) = cat_defs
            .iter()
            .map(|def| match sample.value(&def.id) {
                Some(CellValue::Category(label)) => (def.label_index(label).expect("validated label"), true),
                _ => (0, false),
            })
            .unzip();
        categorical.push(row);
        categorical_mask.push(m);
        visual_refs.push(
            vis_defs
                .iter()
                .map(|def| match sample.value(&def.id) {
                    Some(CellValue::ImageRef(path)) => Some(path.clone()),
                    _ => None,
                })
                .collect(),
        );
    }

    let view = TrainingView {
        sample_ids: table.samples().iter().map(|s| s.sample_id.clone()).collect(),
        categorical_features: cat_defs.iter().map(|d| d.id.clone()).collect(),
        visual_features: vis_defs.iter().map(|d| d.id.clone()).collect(),
        kept_features: features,
        numeric_columns,
        numeric,
        numeric_mask,
        categorical,
        categorical_mask,
        visual_refs,
        splits,
        normalization,
    };
    Ok((view, exclusions))
}

#[derive(Debug, Serialize, Deserialize)]
struct ViewManifest {
    version: u32,
    n_samples: usize,
    features: Vec<FeatureDef>,
    numeric_columns: Vec<NumericColumn>,
    categorical_features: Vec<String>,
    visual_features: Vec<String>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn csv_text(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Document(e.to_string()))?).expect("csv is utf-8"))
}

fn with_ids(names: impl Iterator<Item = String>) -> Vec<String> {
    std::iter::once("sample_id".to_owned()).chain(names).collect()
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_owned()
}

impl TrainingView {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = ViewManifest {
            version: VIEW_FORMAT_VERSION,
            n_samples: self.len(),
            features: self.kept_features.clone(),
            numeric_columns: self.numeric_columns.clone(),
            categorical_features: self.categorical_features.clone(),
            visual_features: self.visual_features.clone(),
        };
        write_file(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;

        let ids = &self.sample_ids;
        let num_names = || with_ids(self.numeric_columns.iter().map(|c| c.name.clone()));
        let cat_names = || with_ids(self.categorical_features.iter().cloned());
        let row = |i: usize, cells: Vec<String>| std::iter::once(ids[i].clone()).chain(cells).collect::<Vec<_>>();

        let files = [
            ("numeric.csv", csv_text(num_names(), (0..self.len()).map(|i| row(i, self.numeric[i].iter().map(f64::to_string).collect())))?),
            ("numeric_mask.csv", csv_text(num_names(), (0..self.len()).map(|i| row(i, self.numeric_mask[i].iter().map(|&b| flag(b)).collect())))?),
            ("categorical.csv", csv_text(cat_names(), (0..self.len()).map(|i| row(i, self.categorical[i].iter().map(usize::to_string).collect())))?),
            ("categorical_mask.csv", csv_text(cat_names(), (0..self.len()).map(|i| row(i, self.categorical_mask[i].iter().map(|&b| flag(b)).collect())))?),
            (
                "visual.csv",
                csv_text(
                    with_ids(self.visual_features.iter().cloned()),
                    (0..self.len()).map(|i| row(i, self.visual_refs[i].iter().map(|r| r.clone().unwrap_or_default()).collect())),
                )?,
            ),
            (
                "normalization.csv",
                csv_text(
                    vec!["column".into(), "mean".into(), "std".into()],
                    (0..self.normalization.columns.len()).map(|j| {
                        vec![
                            self.normalization.columns[j].clone(),
                            self.normalization.mean[j].to_string(),
                            self.normalization.std[j].to_string(),
                        ]
                    }),
                )?,
            ),
            ("splits.csv", csv_text(vec!["sample_id".into(), "split".into()], (0..self.len()).map(|i| vec![ids[i].clone(), self.splits[i].as_str().into()]))?),
        ];
        for (name, text) in files {
            write_file(&dir.join(name), &text)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let manifest: ViewManifest = serde_json::from_str(&read_file(&dir.join("manifest.json"))?)?;
        if manifest.version != VIEW_FORMAT_VERSION {
            return Err(Error::Document(format!("unsupported view version {}", manifest.version)));
        }
        let table = |name: &str, width: usize| -> Result<(Vec<String>, Vec<Vec<String>>)> {
            let raw = crate::standardize::RawTable::from_csv(read_file(&dir.join(name))?.as_bytes())?;
            if raw.header.len() != width + 1 || raw.rows.len() != manifest.n_samples {
                return Err(Error::Document(format!("{name} does not match the manifest")));
            }
            let ids = raw.rows.iter().map(|r| r[0].clone()).collect();
            Ok((ids, raw.rows.into_iter().map(|r| r[1..].to_vec()).collect()))
        };
        let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Document(format!("`{s}` is not a number")));
        let parse_idx = |s: &str| s.parse::<usize>().map_err(|_| Error::Document(format!("`{s}` is not an index")));
        let parse_flag = |s: &str| match s {
            "1" => Ok(true),
            "0" => Ok(false),
            _ => Err(Error::Document(format!("`{s}` is not a mask flag"))),
        };
        let nnum = manifest.numeric_columns.len();
        let ncat = manifest.categorical_features.len();
        let (sample_ids, num) = table("numeric.csv", nnum)?;
        let numeric = num.iter().map(|r| r.iter().map(|s| parse(s)).collect()).collect::<Result<_>>()?;
        let numeric_mask = table("numeric_mask.csv", nnum)?.1.iter().map(|r| r.iter().map(|s| parse_flag(s)).collect()).collect::<Result<_>>()?;
        let categorical = table("categorical.csv", ncat)?.1.iter().map(|r| r.iter().map(|s| parse_idx(s)).collect()).collect::<Result<_>>()?;
        let categorical_mask =
            table("categorical_mask.csv", ncat)?.1.iter().map(|r| r.iter().map(|s| parse_flag(s)).collect()).collect::<Result<_>>()?;
        let visual_refs = table("visual.csv", manifest.visual_features.len())?
            .1
            .into_iter()
            .map(|r| r.into_iter().map(|s| Some(s).filter(|s| !s.is_empty())).collect())
            .collect();
        let splits = table("splits.csv", 1)?
            .1
            .iter()
            .map(|r| match r[0].as_str() {
                "train" => Ok(Split::Train),
                "eval" => Ok(Split::Eval),
                other => Err(Error::Document(format!("unknown split `{other}`"))),
            })
            .collect::<Result<_>>()?;

        let norm_raw = crate::standardize::RawTable::from_csv(read_file(&dir.join("normalization.csv"))?.as_bytes())?;
        let mut normalization = Normalization { columns: Vec::new(), mean: Vec::new(), std: Vec::new() };
        for r in &norm_raw.rows {
            normalization.columns.push(r[0].clone());
            normalization.mean.push(parse(&r[1])?);
            normalization.std.push(parse(&r[2])?);
        }

        Ok(TrainingView {
            sample_ids,
            kept_features: manifest.features,
            numeric_columns: manifest.numeric_columns,
            numeric,
            numeric_mask,
            categorical_features: manifest.categorical_features,
            categorical,
            categorical_mask,
            visual_features: manifest.visual_features,
            visual_refs,
            splits,
            normalization,
        })
    }
}

/// Ids of the features named in `exclusions`.
pub fn excluded_ids(exclusions: &[Exclusion]) -> BTreeSet<&str> {
    exclusions.iter().map(|e| e.feature_id.as_str()).collect()
}

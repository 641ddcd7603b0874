//! Feature availability and alignment-distance statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::FusedTable;

/// Number of equal-width bins over [0, 1] in the availability histogram.
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityStats {
    /// Feature id → observed cells / total samples.
    pub per_feature: BTreeMap<String, f64>,
    /// theme → survey → mean per-feature availability within that survey's samples.
    pub matrix: BTreeMap<String, BTreeMap<String, f64>>,
    /// Counts of per-feature fractions in [i/10, (i+1)/10), last bin closed.
    pub histogram: Vec<usize>,
}

impl AvailabilityStats {
    pub fn themes(&self) -> Vec<&str> {
        self.matrix.keys().map(String::as_str).collect()
    }

    pub fn surveys(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.matrix.values().flat_map(|row| row.keys().map(String::as_str)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn histogram_bin(fraction: f64) -> usize {
    ((fraction * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

pub fn compute_availability(table: &FusedTable) -> AvailabilityStats {
    let n = table.len();
    let mut observed: BTreeMap<&str, usize> = table.features().iter().map(|f| (f.id.as_str(), 0)).collect();
    // survey → (sample count, feature → observed count)
    let mut by_survey: BTreeMap<&str, (usize, BTreeMap<&str, usize>)> = BTreeMap::new();

    for sample in table.samples() {
        let entry = by_survey.entry(sample.source_survey.as_str()).or_default();
        entry.0 += 1;
        for fid in sample.cells.keys() {
            *observed.get_mut(fid.as_str()).expect("cells resolve to features") += 1;
            *entry.1.entry(fid.as_str()).or_default() += 1;
        }
    }

    let fraction = |count: usize, total: usize| if total == 0 { 0.0 } else { count as f64 / total as f64 };
    let per_feature: BTreeMap<String, f64> =
        observed.iter().map(|(fid, &count)| (fid.to_string(), fraction(count, n))).collect();

    let mut themes: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for def in table.features() {
        themes.entry(def.theme.as_str()).or_default().push(def.id.as_str());
    }
    let mut matrix = BTreeMap::new();
    for (theme, fids) in &themes {
        let mut row = BTreeMap::new();
        for (survey, (count, per)) in &by_survey {
            let sum: f64 = fids.iter().map(|f| fraction(per.get(f).copied().unwrap_or(0), *count)).sum();
            row.insert(survey.to_string(), sum / fids.len() as f64);
        }
        matrix.insert(theme.to_string(), row);
    }

    let mut histogram = vec![0; HISTOGRAM_BINS];
    for &f in per_feature.values() {
        histogram[histogram_bin(f)] += 1;
    }

    AvailabilityStats { per_feature, matrix, histogram }
}

/// Descriptive statistics of alignment distances over a feature's observed cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

/// `None` when the feature has no observed cells.
pub fn summarize_alignment(table: &FusedTable, feature_id: &str) -> Option<AlignmentSummary> {
    let mut count = 0usize;
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for cell in table.samples().iter().filter_map(|s| s.cells.get(feature_id)) {
        let d = cell.provenance.alignment_distance_m;
        count += 1;
        sum += d;
        min = min.min(d);
        max = max.max(d);
    }
    (count > 0).then(|| AlignmentSummary { min, mean: sum / count as f64, max, count })
}

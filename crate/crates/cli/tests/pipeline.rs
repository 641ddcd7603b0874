mod common;

use std::fs;
use std::path::Path;

use common::{corpus, fuse_corpus, ok, soilfuse};

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn usage_errors_exit_2() {
    let out = soilfuse(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = soilfuse(&["fuse", "--std", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(soilfuse(&["stats", "--fused", "a", "--out", "b", "--bogus"]).status.code(), Some(2));
    assert_eq!(soilfuse(&["--help"]).status.code(), Some(0));
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = soilfuse(&["stats", "--fused", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"format\": 3}").unwrap();
    assert_eq!(soilfuse(&["export", "--fused", bad.to_str().unwrap(), "--format", "flat", "--out", "x.csv"]).status.code(), Some(1));
}

#[test]
fn fuse_matches_golden_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = fuse_corpus(a.path());
    let fb = fuse_corpus(b.path());
    assert_eq!(read(&fa), read(&corpus().join("golden/dictionary.json")));
    assert_eq!(read(&fa), read(&fb));
    assert_eq!(read(&a.path().join("std/survey.csv")), read(&b.path().join("std/survey.csv")));

    let manifest: serde_json::Value = serde_json::from_str(&read(&a.path().join("fused.manifest.json"))).unwrap();
    let other: serde_json::Value = serde_json::from_str(&read(&b.path().join("fused.manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "fuse");
    assert_eq!(manifest["config_digest"], other["config_digest"]);

    let report: serde_json::Value = serde_json::from_str(&read(&a.path().join("fused.report.json"))).unwrap();
    assert_eq!(report["excluded"][0]["dataset_id"], "climate_2100");
}

#[test]
fn flat_export_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let fused = fuse_corpus(dir.path());
    let out = dir.path().join("flat.csv");
    ok(&["export", "--fused", fused.to_str().unwrap(), "--format", "flat", "--out", out.to_str().unwrap()]);
    assert_eq!(read(&out), read(&corpus().join("golden/flat.csv")));
    let cols: serde_json::Value = serde_json::from_str(&read(&dir.path().join("flat.columns.json"))).unwrap();
    assert_eq!(cols["columns"].as_array().unwrap().len(), 5);

    let dict = dir.path().join("again.json");
    ok(&["export", "--fused", fused.to_str().unwrap(), "--format", "dict", "--out", dict.to_str().unwrap()]);
    assert_eq!(read(&dict), read(&fused));
}

#[test]
fn stats_heatmap_has_one_cell_per_entry() {
    let dir = tempfile::tempdir().unwrap();
    let fused = fuse_corpus(dir.path());
    let out = dir.path().join("stats");
    ok(&["stats", "--fused", fused.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = read(&out.join("availability_matrix.csv"));
    let rows = csv.lines().count() - 1;
    let cols = csv.lines().next().unwrap().split(',').count() - 1;
    assert_eq!((rows, cols), (4, 1));
    let svg = read(&out.join("availability_matrix.svg"));
    assert_eq!(svg.matches(r#"class="cell""#).count(), rows * cols);
    let avail: serde_json::Value = serde_json::from_str(&read(&out.join("availability.json"))).unwrap();
    assert_eq!(avail["availability"]["per_feature"]["ph_h2o"], 5.0 / 6.0);
}

#[test]
fn filter_drops_text_and_far_aligned_features() {
    let dir = tempfile::tempdir().unwrap();
    let fused = fuse_corpus(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&["filter", "--fused", fused.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]);
        out
    };
    let (v1, v2) = (run("v1"), run("v2"));
    let excl: serde_json::Value = serde_json::from_str(&read(&v1.join("exclusions.json"))).unwrap();
    let ids: Vec<&str> = excl.as_array().unwrap().iter().map(|e| e["feature_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["field_notes", "tmean"]);
    for f in ["numeric.csv", "numeric_mask.csv", "categorical.csv", "splits.csv", "normalization.csv", "manifest.json"] {
        assert_eq!(read(&v1.join(f)), read(&v2.join(f)), "{f}");
    }
    // Co-located L001 and L004 land in the same split.
    let splits = read(&v1.join("splits.csv"));
    let tag = |id: &str| splits.lines().find(|l| l.starts_with(id)).unwrap().rsplit(',').next().unwrap().to_owned();
    assert_eq!(tag("survey:L001"), tag("survey:L004"));
}

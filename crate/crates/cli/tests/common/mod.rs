#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus")
}

pub fn soilfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soilfuse")).args(args).output().expect("spawn soilfuse")
}

pub fn ok(args: &[&str]) -> Output {
    let out = soilfuse(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Standardizes every fixture source into `<dir>/std` and fuses into
/// `<dir>/fused.json`, returning the latter.
pub fn fuse_corpus(dir: &Path) -> PathBuf {
    let c = corpus();
    let std_dir = dir.join("std");
    let (c, std_s) = (c.to_str().unwrap(), std_dir.to_str().unwrap());
    ok(&[
        "standardize", "--in", &format!("{c}/raw/survey.csv"), "--spec", &format!("{c}/schemas/survey.toml"),
        "--codebooks", &format!("{c}/codebooks"), "--out", std_s,
    ]);
    for spec in ["climate", "climate_2100"] {
        ok(&["standardize", "--in", &format!("{c}/raw/climate"), "--spec", &format!("{c}/schemas/{spec}.toml"), "--out", std_s]);
    }
    let fused = dir.join("fused.json");
    ok(&["fuse", "--std", std_s, "--schemas", &format!("{c}/schemas"), "--out", fused.to_str().unwrap()]);
    fused
}

//! Run manifests: what a command read, wrote, and how long it took.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<PathBuf>,
    pub flags: BTreeMap<String, String>,
    /// SHA-256 over the command, flags and the bytes of every input file.
    pub config_digest: String,
    pub outputs: Vec<PathBuf>,
    pub report: Option<PathBuf>,
    pub started_unix_ms: u128,
    pub elapsed_ms: f64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Files under `path` in sorted order (the path itself if it is a file).
fn files_under(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_owned()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        out.extend(files_under(&p)?);
    }
    Ok(out)
}

/// Deterministic digest of command, flags and input contents. Paths enter
/// relative to their input root so the digest survives relocation. Run
/// manifests found among the inputs are skipped since they carry timing.
pub fn config_digest(command: &str, flags: &BTreeMap<String, String>, inputs: &[PathBuf]) -> std::io::Result<String> {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    for (k, v) in flags {
        h.update([0]);
        h.update(k.as_bytes());
        h.update([1]);
        h.update(v.as_bytes());
    }
    for root in inputs {
        for file in files_under(root)? {
            if file.to_string_lossy().ends_with("manifest.json") {
                continue;
            }
            let rel = file.strip_prefix(root).unwrap_or(&file);
            h.update([2]);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([3]);
            h.update(Sha256::digest(fs::read(&file)?));
        }
    }
    Ok(hex(&h.finalize()))
}

impl RunManifest {
    pub fn new(
        command: &str,
        inputs: Vec<PathBuf>,
        flags: BTreeMap<String, String>,
        outputs: Vec<PathBuf>,
        report: Option<PathBuf>,
        started: SystemTime,
        elapsed: Duration,
    ) -> std::io::Result<Self> {
        Ok(RunManifest {
            config_digest: config_digest(command, &flags, &inputs)?,
            command: command.to_owned(),
            inputs,
            flags,
            outputs,
            report,
            started_unix_ms: started.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
            elapsed_ms: elapsed.as_secs_f64() * 1e3,
        })
    }
}

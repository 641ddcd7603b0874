//! `soilfuse` command line: standardize, fuse, stats, export, filter, serve.
//!
//! Exit status is 0 on success, 1 when inputs fail validation and 2 on usage
//! errors. Every pipeline command writes a [`manifest::RunManifest`] next to
//! its outputs.

pub mod heatmap;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use soilfuse_core::pipeline::{fuse_directory, load_codebooks, load_feature_catalog, load_schemas, standardize_source, FEATURE_CATALOG};
use soilfuse_core::view::{build_training_view, FilterConfig, ViewParams};
use soilfuse_core::{
    compute_availability, export_dictionary, export_flat_table, import_dictionary, summarize_alignment, FusedTable,
    FusionSchema,
};

use crate::heatmap::{render_heatmap_svg, LabeledMatrix};
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "soilfuse", version, about = "Standardize, fuse, export and serve soil and environment data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Dict,
    Flat,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Standardize one raw source (CSV table or directory of .asc rasters).
    Standardize {
        #[arg(long = "in")]
        input: PathBuf,
        /// Fusion schema (TOML) of the source.
        #[arg(long)]
        spec: PathBuf,
        /// Directory of codebook TOML files.
        #[arg(long)]
        codebooks: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse a standardized directory into a dictionary export.
    Fuse {
        #[arg(long)]
        std: PathBuf,
        /// Directory of schemas plus features.toml.
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Availability statistics, heatmap and alignment summaries.
    Stats {
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-export a fused table as a dictionary or a flat table.
    Export {
        #[arg(long)]
        fused: PathBuf,
        #[arg(long, value_enum)]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
        /// Root that image references are resolved against for existence checks.
        #[arg(long)]
        asset_root: Option<PathBuf>,
    },
    /// Build the filtered, z-scored training view.
    Filter {
        #[arg(long)]
        fused: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        min_avail: f64,
        #[arg(long = "max-align-m", default_value_t = 200.0)]
        max_align_m: f64,
        #[arg(long, default_value_t = 0.1)]
        eval_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the query API over HTTP.
    Serve {
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

/// Parses `args` (program name first), runs one command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// `out` with its extension replaced, e.g. `fused.json` → `fused.report.json`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

fn load_fused(path: &Path) -> Result<FusedTable> {
    import_dictionary(&read_text(path)?).with_context(|| format!("loading {}", path.display()))
}

struct Run {
    command: &'static str,
    inputs: Vec<PathBuf>,
    flags: BTreeMap<String, String>,
    started: SystemTime,
    clock: Instant,
}

impl Run {
    fn start(command: &'static str, inputs: &[&Path], flags: &[(&str, String)]) -> Self {
        Run {
            command,
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            flags: flags.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    fn finish(self, manifest_path: &Path, outputs: Vec<PathBuf>, report: Option<PathBuf>) -> Result<()> {
        let m = RunManifest::new(self.command, self.inputs, self.flags, outputs, report, self.started, self.clock.elapsed())
            .context("hashing inputs")?;
        write_text(manifest_path, &to_json(&m)?)
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Standardize { input, spec, codebooks, out } => standardize(&input, &spec, codebooks.as_deref(), &out),
        Command::Fuse { std, schemas, out } => fuse(&std, &schemas, &out),
        Command::Stats { fused, out } => stats(&fused, &out),
        Command::Export { fused, format, out, asset_root } => export(&fused, format, &out, asset_root.as_deref()),
        Command::Filter { fused, min_avail, max_align_m, eval_fraction, seed, out } => {
            let params = ViewParams {
                filter: FilterConfig { min_avail, max_align_m, ..FilterConfig::default() },
                eval_fraction,
                seed,
            };
            filter(&fused, &params, &out)
        }
        Command::Serve { fused, gazetteer, regions, port, host } => {
            serve(&fused, gazetteer.as_deref(), regions.as_deref(), SocketAddr::new(host, port))
        }
    }
}

fn standardize(input: &Path, spec: &Path, codebooks: Option<&Path>, out: &Path) -> Result<()> {
    let mut inputs = vec![input, spec];
    inputs.extend(codebooks);
    let run = Run::start("standardize", &inputs, &[]);
    let schema = FusionSchema::from_toml(&read_text(spec)?).with_context(|| format!("schema {}", spec.display()))?;
    let codebooks = match codebooks {
        Some(dir) => load_codebooks(dir)?,
        None => BTreeMap::new(),
    };
    let (summary, report) = standardize_source(input, &schema, &codebooks, out)?;
    eprintln!(
        "{}: {} records, {} rasters, {} values set missing",
        summary.dataset_id, summary.records, summary.rasters, summary.set_missing
    );
    if !report.entries.is_empty() {
        eprintln!("{} issues logged", report.entries.len());
    }
    let report_path = summary.outputs.iter().find(|p| p.to_string_lossy().ends_with(".issues.csv")).cloned();
    run.finish(&out.join(format!("{}.manifest.json", summary.dataset_id)), summary.outputs, report_path)
}

#[derive(Serialize)]
struct FuseReportDoc<'a> {
    samples: usize,
    cells: usize,
    excluded: Vec<BTreeMap<&'static str, String>>,
    datasets: &'a [soilfuse_core::FusionReport],
}

fn fuse(std_dir: &Path, schema_dir: &Path, out: &Path) -> Result<()> {
    let run = Run::start("fuse", &[std_dir, schema_dir], &[]);
    let features = load_feature_catalog(&schema_dir.join(FEATURE_CATALOG))?;
    let schemas = load_schemas(schema_dir)?;
    let outcome = fuse_directory(std_dir, &schemas, features)?;
    let (dict, warnings) = export_dictionary(&outcome.table, None)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let report = FuseReportDoc {
        samples: outcome.table.len(),
        cells: outcome.table.cell_count(),
        excluded: outcome
            .excluded
            .iter()
            .map(|(id, reason)| [("dataset_id", id.clone()), ("reason", reason.to_string())].into())
            .collect(),
        datasets: &outcome.reports,
    };
    for (id, reason) in &outcome.excluded {
        eprintln!("excluded {id}: {reason}");
    }
    eprintln!("fused {} samples, {} cells", report.samples, report.cells);
    let report_path = sibling(out, "report.json");
    write_text(out, &dict)?;
    write_text(&report_path, &to_json(&report)?)?;
    run.finish(&sibling(out, "manifest.json"), vec![out.to_owned()], Some(report_path))
}

#[derive(Serialize)]
struct StatsDoc {
    samples: usize,
    availability: soilfuse_core::AvailabilityStats,
    alignment: BTreeMap<String, Option<soilfuse_core::AlignmentSummary>>,
}

fn stats(fused: &Path, out: &Path) -> Result<()> {
    let run = Run::start("stats", &[fused], &[]);
    let table = load_fused(fused)?;
    let availability = compute_availability(&table);
    let matrix = LabeledMatrix {
        row_labels: availability.themes().iter().map(|s| s.to_string()).collect(),
        col_labels: availability.surveys().iter().map(|s| s.to_string()).collect(),
        values: availability
            .themes()
            .iter()
            .map(|t| availability.surveys().iter().map(|s| availability.matrix[*t].get(*s).copied().unwrap_or(0.0)).collect())
            .collect(),
    };
    let alignment = table.features().iter().map(|f| (f.id.clone(), summarize_alignment(&table, &f.id))).collect();

    let mut hist = String::from("bin_low,bin_high,features\n");
    for (i, n) in availability.histogram.iter().enumerate() {
        let bins = availability.histogram.len() as f64;
        hist.push_str(&format!("{},{},{n}\n", i as f64 / bins, (i + 1) as f64 / bins));
    }
    let files = [
        ("availability.json", to_json(&StatsDoc { samples: table.len(), availability, alignment })?),
        ("availability_matrix.csv", matrix.to_csv()?),
        ("availability_matrix.svg", render_heatmap_svg(&matrix, "Feature availability by theme and survey")?),
        ("availability_histogram.csv", hist),
    ];
    let mut outputs = Vec::new();
    for (name, text) in files {
        let path = out.join(name);
        write_text(&path, &text)?;
        outputs.push(path);
    }
    run.finish(&out.join("manifest.json"), outputs, None)
}

fn export(fused: &Path, format: ExportFormat, out: &Path, asset_root: Option<&Path>) -> Result<()> {
    let fmt = match format {
        ExportFormat::Dict => "dict",
        ExportFormat::Flat => "flat",
    };
    let mut inputs = vec![fused];
    inputs.extend(asset_root);
    let run = Run::start("export", &inputs, &[("format", fmt.to_owned())]);
    let table = load_fused(fused)?;
    let outputs = match format {
        ExportFormat::Dict => {
            let (text, warnings) = export_dictionary(&table, asset_root)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            write_text(out, &text)?;
            vec![out.to_owned()]
        }
        ExportFormat::Flat => {
            let (csv, columns) = export_flat_table(&table)?;
            let columns_path = sibling(out, "columns.json");
            write_text(out, &csv)?;
            write_text(&columns_path, &columns)?;
            vec![out.to_owned(), columns_path]
        }
    };
    run.finish(&sibling(out, "manifest.json"), outputs, None)
}

fn filter(fused: &Path, params: &ViewParams, out: &Path) -> Result<()> {
    let flags = [
        ("min_avail", params.filter.min_avail.to_string()),
        ("max_align_m", params.filter.max_align_m.to_string()),
        ("eval_fraction", params.eval_fraction.to_string()),
        ("seed", params.seed.to_string()),
    ];
    let run = Run::start("filter", &[fused], &flags);
    let table = load_fused(fused)?;
    let (view, exclusions) = build_training_view(&table, params)?;
    view.write_dir(out)?;
    let report = out.join("exclusions.json");
    write_text(&report, &to_json(&exclusions)?)?;
    for e in &exclusions {
        let rules: Vec<String> = e.rules.iter().map(|r| r.to_string()).collect();
        eprintln!("excluded {}: {}", e.feature_id, rules.join("; "));
    }
    eprintln!(
        "kept {} features ({} numeric dims) over {} samples",
        view.kept_features.len(),
        view.numeric_columns.len(),
        view.len()
    );
    let outputs = ["manifest.json", "numeric.csv", "numeric_mask.csv", "categorical.csv", "categorical_mask.csv", "visual.csv", "normalization.csv", "splits.csv"]
        .iter()
        .map(|f| out.join(f))
        .collect();
    run.finish(&out.join("run_manifest.json"), outputs, Some(report))
}

fn serve(fused: &Path, gazetteer: Option<&Path>, regions: Option<&Path>, addr: SocketAddr) -> Result<()> {
    let engine = soilfuse_query::load_engine(fused, gazetteer, regions, soilfuse_query::EngineConfig::default())?;
    let geocoder = soilfuse_query::NominatimClient::from_env()?
        .map(|c| Arc::new(c) as Arc<dyn soilfuse_query::ExternalGeocoder>);
    if geocoder.is_some() {
        eprintln!("external geocoder enabled via {}", soilfuse_query::GEOCODER_URL_ENV);
    }
    let state = Arc::new(soilfuse_query::AppState::new(engine, geocoder));
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        soilfuse_query::serve(listener, state).await?;
        Ok(())
    })
}

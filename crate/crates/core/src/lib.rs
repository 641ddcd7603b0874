//! Standardization, schema-driven fusion and ML-ready export for heterogeneous
//! soil and environment data.
//!
//! Raw sources come in two structural flavours: point-located records
//! (sample-structured) and gridded products (map-structured). The crate turns
//! both into standardized intermediate forms, fuses them into a single
//! [`FusedTable`] keyed by soil sample, and derives availability statistics,
//! dictionary/flat exports and a filtered, z-scored [`TrainingView`].
//!
//! The numeric kernels (great-circle distance, raster lookup, column
//! statistics) are generic over [`Scalar`]; the stored dataset itself is
//! always double precision, exposed through the aliases below.

pub mod availability;
pub mod error;
pub mod export;
pub mod fuse;
pub mod geo;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod raster;
pub mod schema;
pub mod standardize;
pub mod view;

pub use error::{Error, Result};
pub use num::Scalar;

/// WGS84 lon/lat point in double precision.
pub type GeoPoint = geo::Point<f64>;
/// Portable raster grid in double precision.
pub type RasterGrid = raster::Grid<f64>;
/// Outcome of sampling a double-precision raster.
pub type RasterSample = raster::Sample<f64>;
/// Normalization statistics in double precision.
pub type NormalizationStats = view::Normalization<f64>;

pub use availability::{compute_availability, summarize_alignment, AlignmentSummary, AvailabilityStats};
pub use export::{export_dictionary, export_flat_table, import_dictionary};
pub use fuse::{build_location_index, execute_schema, link_asset, screen_dataset, FusionReport, Screening};
pub use geo::{haversine_m, location_key};
pub use model::{
    validate_cell, Cell, CellValue, CellViolation, Codebook, FeatureDef, FusedTable, Modality, Provenance,
    Sample, SourceKind,
};
pub use schema::{ColumnMap, FusionSchema, InvalidRule};
pub use standardize::{
    apply_codebook, convert_unit, detect_invalid_numeric, parse_portable_raster, standardize_table, RawTable,
    StandardizedRecord, StdValue,
};
pub use view::{filter_training_view, fit_apply_zscore, split_by_location, Split, TrainingView};

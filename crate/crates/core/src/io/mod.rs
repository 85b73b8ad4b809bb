//! File surfaces: run configuration, frames, isolines, series, snapshots,
//! and the batch run driver that writes them.

mod config;
mod isolines;
mod render;
mod runner;
mod series;
mod snapshot;

pub use config::{
    deserialize_with_path, parse_config, serialize_config, ConfigError, ParamChange, RenderOptions, RunConfig,
    Schedule, Topology,
};
pub use isolines::{extract_isolines, Polyline};
pub use render::{intensity, overlay_contours, render_frame, write_bytes, ContourSet, GreyImage, RenderError, RgbImage};
pub use runner::{
    config_digest, frame_name, run_batch, Manifest, ManifestEntry, RunError, RunOptions, RunOutcome, RunSummary,
    Runner, DRIFT_LIMIT,
};
pub use series::{read_series, write_series, SeriesError, SERIES_HEADER};
pub use snapshot::{SnapshotError, StateSnapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

//! Scheduled runs and their artifact tree.
//!
//! Parameter changes scheduled `at_cycle: c` are applied after cycle `c`
//! completes, before cycle `c + 1` is computed. Every output file is a pure
//! function of the config and the engine version.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{serialize_config, RunConfig};
use super::isolines::extract_isolines;
use super::render::{overlay_contours, render_frame, write_bytes, ContourSet, GreyImage, RenderError};
use super::series::write_series;
use super::snapshot::{SnapshotError, StateSnapshot};
use crate::analysis::{classify, shape_metrics, MacroRecord, Regime};
use crate::error::KinonError;
use crate::kernel::ParamPatch;
use crate::network::{Execution, FieldSnapshot, Simulation};
use crate::ENGINE_VERSION;

/// Largest tolerated relative conservation drift.
pub const DRIFT_LIMIT: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Kinon(#[from] KinonError),
    #[error("conservation audit failed at cycle {cycle}: relative drift {drift:e} exceeds {limit:e}")]
    Audit { cycle: u64, drift: f64, limit: f64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

/// A live run: the simulation plus its schedule, series and audit state.
#[derive(Debug, Clone)]
pub struct Runner {
    config: RunConfig,
    sim: Simulation,
    series: Vec<MacroRecord>,
    pending: Option<ParamPatch>,
    quiet_run: usize,
    stasis: Option<u64>,
    border_hit: Option<u64>,
    drift_limit: f64,
}

impl Runner {
    pub fn new(config: &RunConfig, execution: Execution) -> Result<Self, KinonError> {
        let sim = config.simulation()?.with_execution(execution);
        let mut runner = Self {
            config: config.clone(),
            sim,
            series: Vec::new(),
            pending: None,
            quiet_run: 0,
            stasis: None,
            border_hit: None,
            drift_limit: DRIFT_LIMIT,
        };
        runner.check_border();
        Ok(runner)
    }

    pub fn with_drift_limit(mut self, limit: f64) -> Self {
        self.drift_limit = limit;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn cycle(&self) -> u64 {
        self.sim.cycle()
    }

    pub fn series(&self) -> &[MacroRecord] {
        &self.series
    }

    /// Onset of the first stasis seen so far.
    pub fn stasis(&self) -> Option<u64> {
        self.stasis
    }

    /// Cycle at which mass first reached the lattice edge.
    pub fn border_hit(&self) -> Option<u64> {
        self.border_hit
    }

    /// Queues a patch for the next cycle boundary, merged over anything
    /// already queued. Returns the merged patch after checking that it yields
    /// a valid parameter set.
    pub fn queue_patch(&mut self, patch: &ParamPatch) -> Result<ParamPatch, KinonError> {
        let mut merged = self.pending.unwrap_or_default();
        merged.merge(patch);
        let mut params = *self.sim.params();
        if let Some(scheduled) = self.config.patch_at(self.cycle()) {
            params = params.apply(&scheduled);
        }
        params.apply(&merged).validate(Some(self.sim.omega()))?;
        self.pending = Some(merged);
        Ok(merged)
    }

    pub fn pending_patch(&self) -> Option<ParamPatch> {
        self.pending
    }

    /// Applies due patches, computes one cycle and audits conservation.
    pub fn step(&mut self) -> Result<MacroRecord, RunError> {
        let mut due = self.config.patch_at(self.cycle());
        if let Some(extra) = self.pending.take() {
            due.get_or_insert_with(ParamPatch::default).merge(&extra);
        }
        if let Some(patch) = due {
            self.sim.set_params(self.sim.params().apply(&patch))?;
        }
        let stats = self.sim.step();
        let record = MacroRecord::from_stats(&stats, self.sim.omega());
        self.series.push(record);
        let s = &self.config.schedule;
        if record.exchange_rate <= s.stasis_tolerance && record.turnover_rate <= s.stasis_tolerance {
            self.quiet_run += 1;
            if self.quiet_run >= s.stasis_window && self.stasis.is_none() {
                self.stasis = Some(record.cycle + 1 - self.quiet_run as u64);
            }
        } else {
            self.quiet_run = 0;
        }
        self.check_border();
        if !(record.drift <= self.drift_limit) {
            return Err(RunError::Audit {
                cycle: record.cycle,
                drift: record.drift,
                limit: self.drift_limit,
            });
        }
        Ok(record)
    }

    fn check_border(&mut self) {
        if self.border_hit.is_some() {
            return;
        }
        let net = self.sim.network();
        let Some(g) = net.geometry() else { return };
        let (w, h) = (g.width, g.height);
        let state = self.sim.state();
        let edge = (0..w)
            .flat_map(|x| [(x, 0), (x, h - 1)])
            .chain((0..h).flat_map(|y| [(0, y), (w - 1, y)]));
        if edge.into_iter().any(|(x, y)| state.node_mass(net, y * w + x) > 0.0) {
            self.border_hit = Some(self.sim.cycle());
        }
    }

    /// The rendered quantity: total mass, or storage with `storage_only`.
    pub fn field(&self) -> FieldSnapshot {
        if self.config.render.storage_only {
            self.sim.storage_field()
        } else {
            self.sim.field()
        }
    }

    pub fn frame(&self) -> GreyImage {
        render_frame(&self.field(), self.config.render.intensity_scale)
    }

    pub fn contours(&self) -> ContourSet {
        let field = self.field();
        let level = self.config.contour_level();
        ContourSet {
            cycle: self.cycle(),
            width: field.width(),
            height: field.height(),
            level,
            lines: extract_isolines(&field, level),
        }
    }

    pub fn summary(&self) -> RunSummary {
        let s = &self.config.schedule;
        let regime = classify(&self.series, s.stasis_tolerance, s.stasis_window);
        let mass = self.sim.field();
        let level = self.config.contour_level();
        let metrics = shape_metrics(&mass, level);
        let last = self.series.last();
        let argmax = mass.argmax();
        RunSummary {
            cycles_run: self.cycle(),
            stasis_cycle: self.stasis,
            regime: match regime {
                Regime::Stasis { .. } => "stasis",
                Regime::CoherentEquilibrium { .. } => "coherent-equilibrium",
                Regime::Active => "active",
            }
            .to_string(),
            max_drift: self.series.iter().map(|r| r.drift).fold(0.0, f64::max),
            final_exchange_rate: last.map(|r| r.exchange_rate),
            final_turnover_rate: last.map(|r| r.turnover_rate),
            contour_level: level,
            support_area: metrics.support_area,
            components: metrics.components,
            asymmetry: metrics.asymmetry,
            argmax: [argmax % mass.width(), argmax / mass.width()],
            border_hit_cycle: self.border_hit,
        }
    }
}

/// Final report of a run, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub cycles_run: u64,
    pub stasis_cycle: Option<u64>,
    pub regime: String,
    pub max_drift: f64,
    pub final_exchange_rate: Option<f64>,
    pub final_turnover_rate: Option<f64>,
    pub contour_level: f64,
    /// Nodes whose mass is at or above the contour level.
    pub support_area: usize,
    pub components: usize,
    pub asymmetry: f64,
    pub argmax: [usize; 2],
    pub border_hit_cycle: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

/// `manifest.json`: what produced the tree and a digest of every file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub engine: String,
    pub engine_version: String,
    pub config_sha256: String,
    pub files: Vec<ManifestEntry>,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the canonical serialized config.
pub fn config_digest(config: &RunConfig) -> String {
    hex_digest(serialize_config(config).as_bytes())
}

/// `frames/<prefix>_<cycle>.<ext>` with the cycle zero-padded to 6 digits.
pub fn frame_name(prefix: &str, cycle: u64, ext: &str) -> String {
    format!("frames/{prefix}_{cycle:06}.{ext}")
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub execution: Execution,
    /// Stop as soon as a stasis is confirmed (also set by the schedule).
    pub until_stasis: bool,
    pub frame_stride: Option<u64>,
    pub contour_stride: Option<u64>,
    /// Overrides [`DRIFT_LIMIT`].
    pub drift_limit: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub series: Vec<MacroRecord>,
    pub manifest: Manifest,
}

struct Tree {
    root: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Tree {
    fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.root.join(rel);
        write_bytes(&path, bytes).map_err(|source| RunError::Io { path, source })?;
        self.files.push(ManifestEntry {
            path: rel.to_string(),
            sha256: hex_digest(bytes),
        });
        Ok(())
    }

    fn frame(&mut self, runner: &Runner) -> Result<(), RunError> {
        let image = runner.frame();
        let prefix = &runner.config.render.frame_prefix;
        self.put(&frame_name(prefix, runner.cycle(), "pgm"), &image.to_pgm())?;
        if runner.config.render.png {
            self.put(&frame_name(prefix, runner.cycle(), "png"), &image.to_png()?)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ContourFile<'a> {
    level: f64,
    sets: Vec<ContourEntry<'a>>,
}

#[derive(Serialize)]
struct ContourEntry<'a> {
    cycle: u64,
    lines: &'a [super::isolines::Polyline],
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_vec_pretty(value).expect("serializing plain data");
    text.push(b'\n');
    text
}

/// Runs `config` and writes its artifact tree under `out`:
///
/// * `config.json`, `manifest.json`, `summary.json`;
/// * `series.csv`, one row per completed cycle;
/// * `frames/`, at cycle 0, every frame stride and at the final cycle;
/// * `contours.json` and `contours.png`, isolines every contour stride
///   drawn over the final frame;
/// * `final.snap`, the final state.
///
/// A conservation audit failure stops the run after writing the series so
/// far.
pub fn run_batch(config: &RunConfig, options: &RunOptions, out: &Path) -> Result<RunOutcome, RunError> {
    let mut runner = Runner::new(config, options.execution)?;
    if let Some(limit) = options.drift_limit {
        runner = runner.with_drift_limit(limit);
    }
    let schedule = &config.schedule;
    let frame_stride = options.frame_stride.unwrap_or(schedule.frame_stride);
    let contour_stride = options.contour_stride.unwrap_or(schedule.contour_stride);
    let until_stasis = options.until_stasis || schedule.stop_on_stasis;
    let mut tree = Tree {
        root: out.to_path_buf(),
        files: Vec::new(),
    };
    let config_text = serialize_config(config);
    tree.put("config.json", config_text.as_bytes())?;
    tree.frame(&runner)?;
    let mut last_frame = 0;
    let mut contours = Vec::new();
    while runner.cycle() < schedule.max_cycles {
        if let Err(e) = runner.step() {
            tree.put("series.csv", &write_series(runner.series()))?;
            return Err(e);
        }
        let c = runner.cycle();
        if frame_stride > 0 && c % frame_stride == 0 {
            tree.frame(&runner)?;
            last_frame = c;
        }
        if contour_stride > 0 && c % contour_stride == 0 {
            contours.push(runner.contours());
        }
        if until_stasis && runner.stasis().is_some() {
            break;
        }
    }
    if last_frame != runner.cycle() {
        tree.frame(&runner)?;
    }
    tree.put("series.csv", &write_series(runner.series()))?;
    let contour_file = ContourFile {
        level: config.contour_level(),
        sets: contours
            .iter()
            .map(|c| ContourEntry {
                cycle: c.cycle,
                lines: &c.lines,
            })
            .collect(),
    };
    tree.put("contours.json", &to_json(&contour_file))?;
    let overlay = overlay_contours(&runner.frame(), &contours, config.render.overlay_zoom as usize)?;
    tree.put("contours.png", &overlay.to_png()?)?;
    tree.put("final.snap", &StateSnapshot::of(runner.simulation())?.encode())?;
    let summary = runner.summary();
    tree.put("summary.json", &to_json(&summary))?;

    let mut files = std::mem::take(&mut tree.files);
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        engine: "kinon".to_string(),
        engine_version: ENGINE_VERSION.to_string(),
        config_sha256: hex_digest(config_text.as_bytes()),
        files,
    };
    tree.put("manifest.json", &to_json(&manifest))?;
    Ok(RunOutcome {
        summary,
        series: runner.series,
        manifest,
    })
}

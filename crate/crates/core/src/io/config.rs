use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{STASIS_TOLERANCE, STASIS_WINDOW};
use crate::error::{FieldError, KinonError, ValidationError};
use crate::kernel::{ModelParams, ParamPatch};
use crate::network::{build_grid, Boundary, DegreeClass, Network, Simulation};

/// Lattice shape of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub degree: DegreeClass,
    pub width: usize,
    #[serde(default = "one")]
    pub height: usize,
    #[serde(default = "periodic")]
    pub boundary: Boundary,
}

/// A parameter patch applied before cycle `at_cycle + 1` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamChange {
    pub at_cycle: u64,
    pub params: ParamPatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default = "default_max_cycles")]
    pub max_cycles: u64,
    /// Emit a frame every `frame_stride` cycles; 0 keeps only the initial and
    /// final frames.
    #[serde(default)]
    pub frame_stride: u64,
    /// Extract isolines every `contour_stride` cycles; 0 disables them.
    #[serde(default = "default_contour_stride")]
    pub contour_stride: u64,
    #[serde(default)]
    pub stop_on_stasis: bool,
    #[serde(default = "default_tolerance")]
    pub stasis_tolerance: f64,
    #[serde(default = "default_window")]
    pub stasis_window: usize,
    #[serde(default)]
    pub param_changes: Vec<ParamChange>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            max_cycles: default_max_cycles(),
            frame_stride: 0,
            contour_stride: default_contour_stride(),
            stop_on_stasis: false,
            stasis_tolerance: default_tolerance(),
            stasis_window: default_window(),
            param_changes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderOptions {
    /// Frame intensity is `round(255 * clamp(v * intensity_scale, 0, 1))`.
    #[serde(default = "one_f64")]
    pub intensity_scale: f64,
    /// Render storage `S_o` instead of total local mass.
    #[serde(default)]
    pub storage_only: bool,
    /// Isoline level; defaults to the mean mass `omega / N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour_level: Option<f64>,
    /// Pixel magnification of the contour overlay.
    #[serde(default = "default_zoom")]
    pub overlay_zoom: u32,
    /// File name stem of emitted frames, followed by the zero-padded cycle.
    #[serde(default = "default_prefix")]
    pub frame_prefix: String,
    #[serde(default = "yes")]
    pub png: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            intensity_scale: 1.0,
            storage_only: false,
            contour_level: None,
            overlay_zoom: default_zoom(),
            frame_prefix: default_prefix(),
            png: true,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub topology: Topology,
    pub omega: f64,
    /// Singularity position `[x, y]`; defaults to `[width / 2, height / 2]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<[usize; 2]>,
    pub params: ModelParams,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub render: RenderOptions,
}

fn one() -> usize {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn periodic() -> Boundary {
    Boundary::Periodic
}
fn default_max_cycles() -> u64 {
    1000
}
fn default_contour_stride() -> u64 {
    20
}
fn default_tolerance() -> f64 {
    STASIS_TOLERANCE
}
fn default_window() -> usize {
    STASIS_WINDOW
}
fn default_zoom() -> u32 {
    4
}
fn default_prefix() -> String {
    "frame".to_string()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Malformed JSON, a wrong type or an unknown field.
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

impl ConfigError {
    /// Field errors in a uniform shape.
    pub fn field_errors(&self) -> Vec<FieldError> {
        match self {
            ConfigError::Syntax { path, message } => vec![FieldError::new(path.clone(), message.clone())],
            ConfigError::Invalid(v) => v.0.clone(),
        }
    }
}

/// Parses a config and validates it.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = deserialize_with_path(text)?;
    config.validate()?;
    Ok(config)
}

/// Deserializes any JSON document, reporting failures with the offending path.
pub fn deserialize_with_path<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Syntax {
            path: if path == "." { String::new() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

/// Pretty JSON with every field spelled out. Floats keep full precision.
pub fn serialize_config(config: &RunConfig) -> String {
    let mut text = serde_json::to_string_pretty(config).expect("config serialization is infallible");
    text.push('\n');
    text
}

impl RunConfig {
    /// A config with default schedule and rendering.
    pub fn new(topology: Topology, omega: f64, params: ModelParams) -> Self {
        Self {
            topology,
            omega,
            seed: None,
            params,
            schedule: Schedule::default(),
            render: RenderOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut errors = Vec::new();
        let t = &self.topology;
        let min = |d: DegreeClass| if d == DegreeClass::D2 { (3, 1) } else { (3, 3) };
        let (min_w, min_h) = min(t.degree);
        if t.width < min_w {
            errors.push(FieldError::new("topology.width", format!("must be at least {min_w}")));
        }
        if t.degree == DegreeClass::D2 && t.height != 1 {
            errors.push(FieldError::new("topology.height", "must be 1 for degree class 2"));
        } else if t.height < min_h {
            errors.push(FieldError::new("topology.height", format!("must be at least {min_h}")));
        }
        if t.width.checked_mul(t.height).map_or(true, |n| n > u32::MAX as usize) {
            errors.push(FieldError::new("topology", "too many nodes"));
        }
        let omega_ok = self.omega.is_finite() && self.omega > 0.0;
        if !omega_ok {
            errors.push(FieldError::new("omega", format!("must be positive and finite, got {}", self.omega)));
        }
        if let Some([x, y]) = self.seed {
            if x >= t.width || y >= t.height {
                errors.push(FieldError::new(
                    "seed",
                    format!("({x}, {y}) lies outside the {}x{} lattice", t.width, t.height),
                ));
            }
        }
        let omega = omega_ok.then_some(self.omega);
        if let Err(e) = self.params.validate(omega) {
            errors.extend(e.0.into_iter().map(|f| f.nested("params")));
        }
        let s = &self.schedule;
        if !(s.stasis_tolerance.is_finite() && s.stasis_tolerance >= 0.0) {
            errors.push(FieldError::new("schedule.stasis_tolerance", "must be finite and >= 0"));
        }
        if s.stasis_window == 0 {
            errors.push(FieldError::new("schedule.stasis_window", "must be at least 1"));
        }
        let mut params = self.params;
        for (i, change) in s.param_changes.iter().enumerate() {
            let path = format!("schedule.param_changes[{i}]");
            if i > 0 && change.at_cycle < s.param_changes[i - 1].at_cycle {
                errors.push(FieldError::new(format!("{path}.at_cycle"), "changes must be in cycle order"));
            }
            params = params.apply(&change.params);
            if let Err(e) = params.validate(omega) {
                errors.extend(e.0.into_iter().map(|f| f.nested(&format!("{path}.params"))));
            }
        }
        let r = &self.render;
        if !(r.intensity_scale.is_finite() && r.intensity_scale > 0.0) {
            errors.push(FieldError::new("render.intensity_scale", "must be positive and finite"));
        }
        if let Some(level) = r.contour_level {
            if !(level.is_finite() && level > 0.0) {
                errors.push(FieldError::new("render.contour_level", "must be positive and finite"));
            }
        }
        if r.overlay_zoom == 0 || r.overlay_zoom > 64 {
            errors.push(FieldError::new("render.overlay_zoom", "must lie in 1..=64"));
        }
        let prefix_ok = !r.frame_prefix.is_empty()
            && r.frame_prefix
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !prefix_ok {
            errors.push(FieldError::new("render.frame_prefix", "must be non-empty [A-Za-z0-9_-]"));
        }
        ValidationError::from_list(errors)
    }

    pub fn build_network(&self) -> Result<Network, KinonError> {
        let t = &self.topology;
        build_grid(t.degree, t.width, t.height, t.boundary)
    }

    pub fn seed_position(&self) -> (usize, usize) {
        match self.seed {
            Some([x, y]) => (x, y),
            None => (self.topology.width / 2, self.topology.height / 2),
        }
    }

    /// Validates the config and builds the cycle-0 simulation.
    pub fn simulation(&self) -> Result<Simulation, KinonError> {
        self.validate()?;
        let network = self.build_network()?;
        let (x, y) = self.seed_position();
        let seed = network.node_at(x, y)?;
        Simulation::new(network, self.params, self.omega, seed)
    }

    /// Isoline level in use.
    pub fn contour_level(&self) -> f64 {
        self.render
            .contour_level
            .unwrap_or(self.omega / (self.topology.width * self.topology.height) as f64)
    }

    /// The merged patch scheduled at `cycle`, if any.
    pub fn patch_at(&self, cycle: u64) -> Option<ParamPatch> {
        let mut merged: Option<ParamPatch> = None;
        for change in self.schedule.param_changes.iter().filter(|c| c.at_cycle == cycle) {
            merged.get_or_insert_with(ParamPatch::default).merge(&change.params);
        }
        merged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::PsiSpec;

    fn grid(degree: DegreeClass, n: usize) -> Topology {
        Topology {
            degree,
            width: n,
            height: n,
            boundary: Boundary::Periodic,
        }
    }

    #[test]
    fn minimal_config_uses_basic_model() {
        let c = parse_config(r#"{"topology":{"degree":4,"width":9,"height":9},"omega":40.5,"params":{"kappa":3}}"#)
            .unwrap();
        assert!(c.params.is_basic());
        assert_eq!(c.topology.boundary, Boundary::Periodic);
        assert_eq!(c.schedule.contour_stride, 20);
        assert_eq!(c.seed_position(), (4, 4));
        assert_eq!(c.contour_level(), 0.5);
    }

    #[test]
    fn filter_regime_round_trips() {
        let params = ModelParams::basic(6.0).with_lambda(0.8).with_theta(0.4).with_eta(0.5);
        let mut c = RunConfig::new(grid(DegreeClass::D4, 200), 20000.0, params);
        c.schedule.param_changes.push(ParamChange {
            at_cycle: 40,
            params: ParamPatch {
                psi: Some(PsiSpec::Power { gamma: 0.1 + 0.2 }),
                ..Default::default()
            },
        });
        c.render.contour_level = Some(1.0 / 3.0);
        let text = serialize_config(&c);
        assert_eq!(parse_config(&text).unwrap(), c);
        assert_eq!(serialize_config(&parse_config(&text).unwrap()), text);
    }

    #[test]
    fn unknown_field_is_rejected_with_path() {
        let err = parse_config(r#"{"topology":{"degree":4,"width":9,"height":9,"wrap":true},"omega":1,"params":{"kappa":3}}"#)
            .unwrap_err();
        let fields = err.field_errors();
        assert_eq!(fields[0].path, "topology.wrap");
        assert!(fields[0].message.contains("wrap"), "{}", fields[0].message);

        let err = parse_config(r#"{"topology":{"degree":4,"width":9,"height":9},"omega":1,"params":{"kappa":3,"mu":1}}"#)
            .unwrap_err();
        assert_eq!(err.field_errors()[0].path, "params.mu");
    }

    #[test]
    fn theta_equal_to_omega_is_rejected() {
        let c = RunConfig::new(grid(DegreeClass::D4, 8), 32.0, ModelParams::basic(3.0).with_theta(32.0));
        let err = c.validate().unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].path, "params.theta");
    }

    #[test]
    fn range_errors_carry_paths() {
        let mut c = RunConfig::new(grid(DegreeClass::D8, 2), -1.0, ModelParams::basic(3.0).with_lambda(1.5));
        c.seed = Some([5, 0]);
        c.schedule.param_changes.push(ParamChange {
            at_cycle: 3,
            params: ParamPatch {
                eta: Some(2.0),
                ..Default::default()
            },
        });
        c.render.overlay_zoom = 0;
        let paths: Vec<_> = c.validate().unwrap_err().0.into_iter().map(|f| f.path).collect();
        for p in [
            "topology.width",
            "topology.height",
            "omega",
            "seed",
            "params.lambda",
            "schedule.param_changes[0].params.eta",
            "render.overlay_zoom",
        ] {
            assert!(paths.iter().any(|q| q == p), "missing {p} in {paths:?}");
        }
    }

    #[test]
    fn ring_needs_unit_height() {
        let mut c = RunConfig::new(grid(DegreeClass::D2, 9), 9.0, ModelParams::basic(3.0));
        assert_eq!(c.validate().unwrap_err().0[0].path, "topology.height");
        c.topology.height = 1;
        assert!(c.simulation().is_ok());
    }

    #[test]
    fn patches_at_the_same_cycle_merge_in_order() {
        let mut c = RunConfig::new(grid(DegreeClass::D4, 8), 32.0, ModelParams::basic(3.0));
        for (k, l) in [(Some(4.0), Some(0.5)), (Some(5.0), None)] {
            c.schedule.param_changes.push(ParamChange {
                at_cycle: 10,
                params: ParamPatch {
                    kappa: k,
                    lambda: l,
                    ..Default::default()
                },
            });
        }
        let p = c.patch_at(10).unwrap();
        assert_eq!((p.kappa, p.lambda), (Some(5.0), Some(0.5)));
        assert_eq!(c.patch_at(9), None);
    }
}

//! Cartesian parameter sweeps over a base config.
//!
//! Axis paths address the JSON form of the config (`params.kappa`,
//! `topology.width`, `seed.0`). Combinations are enumerated with the last
//! axis varying fastest; run `i` writes to `runs/run_<i>` and occupies row
//! `i` of `index.csv`, whatever the degree of parallelism.

use std::path::Path;

use kinon_core::io::{
    deserialize_with_path, parse_config, run_batch, serialize_config, ConfigError, RunConfig, RunError, RunOptions,
    RunSummary,
};
use kinon_core::network::Execution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Upper bound on the number of combinations in one plan.
pub const MAX_SWEEP_RUNS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    /// The base config, kept as JSON so axes can address any field.
    pub base: Value,
    pub axes: Vec<Axis>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("malformed plan: {0}")]
    Syntax(String),
    #[error("axes: a sweep needs at least one axis")]
    NoAxes,
    #[error("axes[{0}].values: empty")]
    EmptyAxis(usize),
    #[error("axes[{0}].path: `{1}` repeats an earlier axis")]
    DuplicateAxis(usize, String),
    #[error("axes[{index}].path: `{path}` {reason}")]
    BadPath { index: usize, path: String, reason: String },
    #[error("sweep has {0} combinations, more than the limit of {MAX_SWEEP_RUNS}")]
    TooLarge(u128),
    #[error("base: {0}")]
    Base(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Writes `value` at a dotted path. Intermediate segments must exist; the
/// last segment may add a missing object key.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err("has an empty segment".into());
    }
    let (last, parents) = segments.split_last().expect("split yields one segment");
    let mut node = root;
    for seg in parents {
        node = match node {
            Value::Object(map) => map.get_mut(*seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| format!("does not exist (at `{seg}`)"))?;
    }
    match node {
        Value::Object(map) => {
            map.insert(last.to_string(), value);
            Ok(())
        }
        Value::Array(items) => {
            let slot = last.parse::<usize>().ok().and_then(|i| items.get_mut(i));
            *slot.ok_or_else(|| format!("index `{last}` out of range"))? = value;
            Ok(())
        }
        _ => Err(format!("does not address an object or array (at `{last}`)")),
    }
}

impl SweepPlan {
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        let plan: SweepPlan = serde_json::from_str(text).map_err(|e| SweepError::Syntax(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Checks the plan shape and that every axis path exists in the base
    /// config. Individual combinations are validated when they run.
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.axes.is_empty() {
            return Err(SweepError::NoAxes);
        }
        let base = parse_config(&self.base.to_string()).map_err(|e| SweepError::Base(e.to_string()))?;
        let canonical: Value = serde_json::from_str(&serialize_config(&base)).expect("config round trip");
        let mut size: u128 = 1;
        for (index, axis) in self.axes.iter().enumerate() {
            if axis.values.is_empty() {
                return Err(SweepError::EmptyAxis(index));
            }
            if self.axes[..index].iter().any(|a| a.path == axis.path) {
                return Err(SweepError::DuplicateAxis(index, axis.path.clone()));
            }
            // Every value must at least deserialize; range checks happen per run.
            for value in &axis.values {
                let bad = |reason| SweepError::BadPath {
                    index,
                    path: axis.path.clone(),
                    reason,
                };
                let mut probe = canonical.clone();
                set_path(&mut probe, &axis.path, value.clone()).map_err(bad)?;
                if let Err(ConfigError::Syntax { path, message }) = deserialize_with_path::<RunConfig>(&probe.to_string()) {
                    return Err(bad(format!("gives an unreadable config with {value}: {path}: {message}")));
                }
            }
            size = size.saturating_mul(axis.values.len() as u128);
        }
        if size > MAX_SWEEP_RUNS as u128 {
            return Err(SweepError::TooLarge(size));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value indices of combination `i`, last axis fastest.
    pub fn combination(&self, mut i: usize) -> Vec<usize> {
        let mut picks = vec![0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            picks[k] = i % axis.values.len();
            i /= axis.values.len();
        }
        picks
    }

    /// The config text of combination `i`, before validation.
    pub fn config_text(&self, i: usize) -> Result<String, String> {
        let mut value = self.base.clone();
        for (axis, pick) in self.axes.iter().zip(self.combination(i)) {
            set_path(&mut value, &axis.path, axis.values[pick].clone())?;
        }
        Ok(value.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Invalid,
    Audit,
    Error,
}

impl RunStatus {
    fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Invalid => "invalid",
            RunStatus::Audit => "audit",
            RunStatus::Error => "error",
        }
    }
}

struct RunRecord {
    status: RunStatus,
    summary: Option<RunSummary>,
    message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepReport {
    pub runs: usize,
    pub failed: usize,
    pub audit_failures: usize,
}

pub fn run_name(i: usize) -> String {
    format!("run_{i:05}")
}

fn run_one(plan: &SweepPlan, i: usize, out: &Path, until_stasis: bool) -> RunRecord {
    let fail = |status, message: String| RunRecord {
        status,
        summary: None,
        message,
    };
    let config = match plan.config_text(i).map_err(|e| e.to_string()).and_then(|text| {
        parse_config(&text).map_err(|e| {
            e.field_errors()
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        })
    }) {
        Ok(c) => c,
        Err(message) => return fail(RunStatus::Invalid, message),
    };
    let options = RunOptions {
        // Runs are the unit of parallelism.
        execution: Execution::Sequential,
        until_stasis,
        ..Default::default()
    };
    match run_batch(&config, &options, &out.join("runs").join(run_name(i))) {
        Ok(outcome) => RunRecord {
            status: RunStatus::Ok,
            summary: Some(outcome.summary),
            message: String::new(),
        },
        Err(e @ RunError::Audit { .. }) => fail(RunStatus::Audit, e.to_string()),
        Err(e) => fail(RunStatus::Error, e.to_string()),
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

/// Runs every combination with `parallel` worker threads and writes
/// `plan.json`, `runs/` and `index.csv` under `out`.
pub fn run_sweep(plan: &SweepPlan, out: &Path, parallel: usize, until_stasis: bool) -> Result<SweepReport, SweepError> {
    plan.validate()?;
    let io_err = |path: &Path, e: &dyn std::fmt::Display| SweepError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut plan_text = serde_json::to_string_pretty(plan).expect("plan serializes");
    plan_text.push('\n');
    let plan_path = out.join("plan.json");
    kinon_core::io::write_bytes(&plan_path, plan_text.as_bytes()).map_err(|e| io_err(&plan_path, &e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| io_err(out, &e))?;
    let records: Vec<RunRecord> =
        pool.install(|| (0..plan.len()).into_par_iter().map(|i| run_one(plan, i, out, until_stasis)).collect());

    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header: Vec<String> = vec!["run".into()];
    header.extend(plan.axes.iter().map(|a| a.path.clone()));
    header.extend(
        [
            "status",
            "cycles_run",
            "stasis_cycle",
            "regime",
            "final_Ke",
            "final_Kt",
            "support_area",
            "components",
            "max_drift",
            "message",
        ]
        .map(String::from),
    );
    let index_path = out.join("index.csv");
    let csv_err = |e: csv::Error| io_err(&index_path, &e);
    writer.write_record(&header).map_err(csv_err)?;
    for (i, record) in records.iter().enumerate() {
        let mut row = vec![run_name(i)];
        for (axis, pick) in plan.axes.iter().zip(plan.combination(i)) {
            row.push(axis.values[pick].to_string());
        }
        row.push(record.status.as_str().into());
        match &record.summary {
            Some(s) => row.extend([
                s.cycles_run.to_string(),
                opt(s.stasis_cycle),
                s.regime.clone(),
                opt(s.final_exchange_rate.map(float)),
                opt(s.final_turnover_rate.map(float)),
                s.support_area.to_string(),
                s.components.to_string(),
                float(s.max_drift),
            ]),
            None => row.extend(std::iter::repeat(String::new()).take(8)),
        }
        row.push(record.message.clone());
        writer.write_record(&row).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| io_err(&index_path, &e))?;
    kinon_core::io::write_bytes(&index_path, &bytes).map_err(|e| io_err(&index_path, &e))?;

    Ok(SweepReport {
        runs: records.len(),
        failed: records.iter().filter(|r| r.status != RunStatus::Ok).count(),
        audit_failures: records.iter().filter(|r| r.status == RunStatus::Audit).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn plan(axes: Value) -> String {
        json!({
            "base": {"topology": {"degree": 4, "width": 5, "height": 5}, "omega": 12.5,
                     "params": {"kappa": 3.0}, "schedule": {"max_cycles": 3}},
            "axes": axes,
        })
        .to_string()
    }

    #[test]
    fn set_path_walks_objects_and_arrays() {
        let mut v = json!({"a": {"b": 1}, "s": [1, 2]});
        set_path(&mut v, "a.b", json!(5)).unwrap();
        set_path(&mut v, "a.c", json!(6)).unwrap();
        set_path(&mut v, "s.1", json!(9)).unwrap();
        assert_eq!(v, json!({"a": {"b": 5, "c": 6}, "s": [1, 9]}));
        assert!(set_path(&mut v, "x.y", json!(0)).is_err());
        assert!(set_path(&mut v, "s.2", json!(0)).is_err());
        assert!(set_path(&mut v, "a..b", json!(0)).is_err());
        assert!(set_path(&mut v, "a.b.c", json!(0)).is_err());
    }

    #[test]
    fn combinations_enumerate_last_axis_fastest() {
        let p = SweepPlan::parse(&plan(json!([
            {"path": "params.kappa", "values": [1, 2]},
            {"path": "params.lambda", "values": [0, 0.5, 1]}
        ])))
        .unwrap();
        assert_eq!(p.len(), 6);
        let picks: Vec<Vec<usize>> = (0..6).map(|i| p.combination(i)).collect();
        assert_eq!(picks, [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [1, 2]]);
        assert!(p.config_text(4).unwrap().contains("\"lambda\":0.5"));
    }

    #[test]
    fn plan_shape_is_checked() {
        assert_eq!(SweepPlan::parse(&plan(json!([]))), Err(SweepError::NoAxes));
        assert_eq!(
            SweepPlan::parse(&plan(json!([{"path": "params.kappa", "values": []}]))),
            Err(SweepError::EmptyAxis(0))
        );
        assert!(matches!(
            SweepPlan::parse(&plan(json!([{"path": "params.kappa", "values": [1]}, {"path": "params.kappa", "values": [2]}]))),
            Err(SweepError::DuplicateAxis(1, _))
        ));
        for axis in [
            json!({"path": "nothing.here", "values": [1]}),
            json!({"path": "params.mu", "values": [1]}),
            json!({"path": "params.kappa", "values": [1, "three"]}),
        ] {
            assert!(matches!(SweepPlan::parse(&plan(json!([axis]))), Err(SweepError::BadPath { index: 0, .. })));
        }
        let many: Vec<u32> = (0..400).collect();
        assert_eq!(
            SweepPlan::parse(&plan(json!([
                {"path": "params.kappa", "values": many},
                {"path": "params.lambda", "values": many}
            ]))),
            Err(SweepError::TooLarge(160_000))
        );
    }
}

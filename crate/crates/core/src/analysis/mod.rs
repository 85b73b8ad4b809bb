//! Macrodynamic indices, stasis detection and shape metrics.
//!
//! Both indices are measured at the post-collision instant of a cycle:
//!
//! * exchange rate `K_e = sum(O) / omega`;
//! * turnover rate `K_t = (sum_i |dS_i| + sum_ij |I_ij - O_ij|) / (2 omega)`,
//!   where `dS_i` is the change of storage `S_o` since the previous cycle and
//!   `I_ij` is the inflow gathered in the current cycle.
//!
//! Both are bounded by 1 only while the total equals `omega` exactly. The
//! denominators are therefore `max(omega, M)` and `max(2 omega, M_prev + M)`
//! with the measured masses `M`, summed exactly, which keeps the bound under
//! rounding and changes nothing while the total does not exceed `omega`.

mod shape;

pub use shape::{connected_components, dihedral_asymmetry, shape_metrics, support_area, ShapeMetrics};

use thiserror::Error;

use crate::network::{CycleStats, NetworkState};
use crate::sum::ExactSum;

/// Default stasis tolerance on both indices.
pub const STASIS_TOLERANCE: f64 = 1e-9;
/// Default number of consecutive quiet cycles that make a stasis.
pub const STASIS_WINDOW: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("total quantity must be positive and finite, got {0}")]
    InvalidOmega(f64),
    #[error("states come from different networks")]
    MismatchedStates,
}

fn check_omega(omega: f64) -> Result<(), AnalysisError> {
    if omega.is_finite() && omega > 0.0 {
        Ok(())
    } else {
        Err(AnalysisError::InvalidOmega(omega))
    }
}

/// Exchange rate of a post-collision state.
pub fn exchange_rate(state: &NetworkState, omega: f64) -> Result<f64, AnalysisError> {
    check_omega(omega)?;
    let mut emitted = ExactSum::new();
    emitted.extend(state.outputs.iter().copied());
    let mut mass = ExactSum::new();
    mass.extend(state.storage.iter().copied());
    mass.extend(state.outputs.iter().copied());
    Ok(emitted.value() / omega.max(mass.value()))
}

/// Turnover rate between two consecutive post-collision states.
pub fn turnover_rate(prev: &NetworkState, cur: &NetworkState, omega: f64) -> Result<f64, AnalysisError> {
    check_omega(omega)?;
    if prev.stride() != cur.stride() || prev.node_count() != cur.node_count() {
        return Err(AnalysisError::MismatchedStates);
    }
    let mut acc = ExactSum::new();
    acc.extend(prev.storage.iter().zip(&cur.storage).map(|(a, b)| (b - a).abs()));
    // Unused slots of low-degree nodes hold zeros on both sides.
    acc.extend(cur.inputs.iter().zip(&cur.outputs).map(|(i, o)| (i - o).abs()));
    // The inputs are the previous outputs, so this is M_prev + M. Each
    // rounded |b - a| is at most a + b, hence acc <= masses.
    let mut masses = ExactSum::new();
    for v in [&prev.storage, &cur.storage, &cur.inputs, &cur.outputs] {
        masses.extend(v.iter().copied());
    }
    Ok(acc.value() / (2.0 * omega).max(masses.value()))
}

/// One row of the macrodynamic series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroRecord {
    pub cycle: u64,
    pub exchange_rate: f64,
    pub turnover_rate: f64,
    /// Relative conservation drift `|total - omega| / omega`.
    pub drift: f64,
}

impl MacroRecord {
    pub fn from_stats(stats: &CycleStats, omega: f64) -> Self {
        Self {
            cycle: stats.cycle,
            exchange_rate: stats.exchange_rate(omega),
            turnover_rate: stats.turnover_rate(omega),
            drift: stats.drift(omega),
        }
    }
}

/// Marks attached to a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesEvent {
    StasisOnset(u64),
    /// First cycle at which mass reached the lattice border.
    BorderHit(u64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MacroSeries {
    pub records: Vec<MacroRecord>,
    pub events: Vec<SeriesEvent>,
}

impl MacroSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: MacroRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn max_drift(&self) -> f64 {
        self.records.iter().map(|r| r.drift).fold(0.0, f64::max)
    }

    pub fn last(&self) -> Option<&MacroRecord> {
        self.records.last()
    }
}

/// First cycle from which both indices stay at or below `tolerance` for
/// `window` consecutive records.
pub fn detect_stasis(records: &[MacroRecord], tolerance: f64, window: usize) -> Option<u64> {
    let window = window.max(1);
    let mut run_start = None;
    let mut run_len = 0;
    for (i, r) in records.iter().enumerate() {
        if r.exchange_rate <= tolerance && r.turnover_rate <= tolerance {
            if run_len == 0 {
                run_start = Some(i);
            }
            run_len += 1;
            if run_len >= window {
                return run_start.map(|s| records[s].cycle);
            }
        } else {
            run_len = 0;
        }
    }
    None
}

/// Dynamic regime at the end of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// Both indices reached zero.
    Stasis { onset: u64 },
    /// Both indices hold a constant value that is not all zero.
    CoherentEquilibrium {
        onset: u64,
        exchange_rate: f64,
        turnover_rate: f64,
    },
    Active,
}

/// Classifies a series. A stasis anywhere wins; otherwise the trailing
/// `window` records are checked for constant indices.
pub fn classify(records: &[MacroRecord], tolerance: f64, window: usize) -> Regime {
    if let Some(onset) = detect_stasis(records, tolerance, window) {
        return Regime::Stasis { onset };
    }
    let window = window.max(1);
    let Some(last) = records.last() else {
        return Regime::Active;
    };
    let steady = |r: &MacroRecord| {
        (r.exchange_rate - last.exchange_rate).abs() <= tolerance
            && (r.turnover_rate - last.turnover_rate).abs() <= tolerance
    };
    let run = records.iter().rev().take_while(|r| steady(r)).count();
    if run >= window {
        Regime::CoherentEquilibrium {
            onset: records[records.len() - run].cycle,
            exchange_rate: last.exchange_rate,
            turnover_rate: last.turnover_rate,
        }
    } else {
        Regime::Active
    }
}

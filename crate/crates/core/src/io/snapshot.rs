//! Binary state snapshot.
//!
//! A flat sequence of little-endian 8-byte words:
//!
//! | word | content |
//! |------|---------|
//! | 0 | magic `KINONSN1` |
//! | 1 | format version (`1`) |
//! | 2 | degree class (2, 4 or 8) |
//! | 3 | boundary (0 periodic, 1 bordered) |
//! | 4, 5 | width, height |
//! | 6 | slot stride |
//! | 7 | completed cycles |
//! | 8 | omega (f64) |
//! | 9..=12 | kappa, lambda, eta, theta (f64) |
//! | 13 | psi kind (0 identity, 1 log1p, 2 power) |
//! | 14 | psi gamma (f64, 0 unless power) |
//!
//! followed by the f64 arrays `storage[N]`, `storage_potential[N]`,
//! `inputs[N*stride]`, `outputs[N*stride]`, `channel_potential[N*stride]`
//! with `N = width * height`. Unused slots are stored as zeros.

use thiserror::Error;

use crate::error::KinonError;
use crate::kernel::{ModelParams, PsiSpec};
use crate::network::{build_grid, Boundary, DegreeClass, Geometry, NetworkState, Simulation};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"KINONSN1";
pub const SNAPSHOT_VERSION: u64 = 1;
const HEADER_WORDS: usize = 15;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a kinon snapshot")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u64),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("only lattice networks can be stored")]
    NoGeometry,
    #[error(transparent)]
    Kinon(#[from] KinonError),
}

/// Everything needed to resume a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub geometry: Geometry,
    pub cycle: u64,
    pub omega: f64,
    pub params: ModelParams,
    pub state: NetworkState,
}

impl StateSnapshot {
    pub fn of(sim: &Simulation) -> Result<Self, SnapshotError> {
        Ok(Self {
            geometry: *sim.network().geometry().ok_or(SnapshotError::NoGeometry)?,
            cycle: sim.cycle(),
            omega: sim.omega(),
            params: *sim.params(),
            state: sim.state().clone(),
        })
    }

    pub fn into_simulation(self) -> Result<Simulation, SnapshotError> {
        let g = self.geometry;
        let network = build_grid(g.degree_class, g.width, g.height, g.boundary)?;
        Ok(Simulation::from_state(network, self.state, self.params, self.omega, self.cycle)?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let g = &self.geometry;
        let (kind, gamma) = match self.params.psi {
            PsiSpec::Identity => (0, 0.0),
            PsiSpec::Log1p => (1, 0.0),
            PsiSpec::Power { gamma } => (2, gamma),
        };
        let s = &self.state;
        let mut out = Vec::with_capacity(8 * (HEADER_WORDS + 2 * s.storage.len() + 3 * s.inputs.len()));
        out.extend_from_slice(SNAPSHOT_MAGIC);
        for word in [
            SNAPSHOT_VERSION,
            u32::from(g.degree_class) as u64,
            match g.boundary {
                Boundary::Periodic => 0,
                Boundary::Bordered => 1,
            },
            g.width as u64,
            g.height as u64,
            s.stride() as u64,
            self.cycle,
        ] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        let p = &self.params;
        for v in [self.omega, p.kappa, p.lambda, p.eta, p.theta] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(kind as u64).to_le_bytes());
        out.extend_from_slice(&gamma.to_le_bytes());
        for array in [&s.storage, &s.storage_potential, &s.inputs, &s.outputs, &s.channel_potential] {
            for v in array.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let corrupt = |m: &str| SnapshotError::Corrupt(m.to_string());
        if bytes.len() < 8 || &bytes[..8] != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        if bytes.len() % 8 != 0 || bytes.len() < 8 * HEADER_WORDS {
            return Err(corrupt("truncated header"));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8-byte slice"));
        let float = |i: usize| f64::from_bits(word(i));
        if word(1) != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version(word(1)));
        }
        let degree_class = u32::try_from(word(2))
            .ok()
            .and_then(|d| DegreeClass::try_from(d).ok())
            .ok_or_else(|| corrupt("bad degree class"))?;
        let boundary = match word(3) {
            0 => Boundary::Periodic,
            1 => Boundary::Bordered,
            _ => return Err(corrupt("bad boundary")),
        };
        let dim = |i: usize| usize::try_from(word(i)).map_err(|_| corrupt("dimension overflow"));
        let (width, height, stride) = (dim(4)?, dim(5)?, dim(6)?);
        let psi = match word(13) {
            0 => PsiSpec::Identity,
            1 => PsiSpec::Log1p,
            2 => PsiSpec::Power { gamma: float(14) },
            _ => return Err(corrupt("bad psi kind")),
        };
        let params = ModelParams {
            kappa: float(9),
            lambda: float(10),
            eta: float(11),
            theta: float(12),
            psi,
        };
        let geometry = Geometry {
            degree_class,
            width,
            height,
            boundary,
        };
        let network = build_grid(degree_class, width, height, boundary)?;
        if network.stride() != stride {
            return Err(corrupt("stride does not match the lattice"));
        }
        let n = network.node_count();
        let expected = HEADER_WORDS + 2 * n + 3 * n * stride;
        if bytes.len() / 8 != expected {
            return Err(corrupt("array length does not match dimensions"));
        }
        let mut state = NetworkState::zeros(&network);
        let mut at = HEADER_WORDS;
        for array in [
            &mut state.storage,
            &mut state.storage_potential,
            &mut state.inputs,
            &mut state.outputs,
            &mut state.channel_potential,
        ] {
            for v in array.iter_mut() {
                *v = float(at);
                at += 1;
            }
        }
        Ok(Self {
            geometry,
            cycle: word(7),
            omega: float(8),
            params,
            state,
        })
    }
}

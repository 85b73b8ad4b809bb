//! Simulator for networks of kinetic automata (kinons).
//!
//! Each node conserves and redistributes a scalar quantity through a
//! conservative rank transform: quantities are gathered, ranked, modulated
//! through a kinetic map and scattered back over the node's links. The
//! extended pipeline adds leaky potentials (`lambda`), a measurement map
//! (`psi`), a shunt (`eta`) and an output threshold (`theta`).
//!
//! * [`kernel`]: the node-local collision operator;
//! * [`network`]: balanced-digraph lattices, propagation and the cycle loop;
//! * [`analysis`]: exchange/turnover indices, stasis detection, shape metrics;
//! * [`io`]: run configuration, frames, isolines, series and snapshots.

pub mod analysis;
pub mod error;
pub mod io;
pub mod kernel;
pub mod network;
pub mod sum;

pub use error::{FieldError, KinonError, ValidationError};
pub use kernel::{collide, CollisionTrace, KinonState, ModelParams, ParamPatch, PsiSpec};
pub use network::{build_grid, Boundary, DegreeClass, Network, NetworkState, Simulation};

/// Engine version recorded in artifact manifests.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

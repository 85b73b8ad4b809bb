//! Synchronous two-phase cycle: propagate, then collide every node.
//!
//! The state rests at the post-collision instant: storages hold `S_o`,
//! output buffers hold what each node just emitted, and input buffers still
//! record what each node gathered in that collision. This is the instant at
//! which the exchange and turnover rates are measured. A cycle first moves
//! every output into the reciprocal input slot (overwriting the old record),
//! then collides all nodes.

use rayon::prelude::*;

use super::{FieldSnapshot, Network};
use crate::error::KinonError;
use crate::kernel::{collide_channels, KinonState, ModelParams, NodeTally};
use crate::sum::{exact_sum, CompensatedSum};

/// Whether the per-node phases run on the rayon pool. Both modes give
/// bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Flat per-network buffers, laid out with the network's slot stride.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    stride: usize,
    pub storage: Vec<f64>,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
    pub storage_potential: Vec<f64>,
    pub channel_potential: Vec<f64>,
}

impl NetworkState {
    pub fn zeros(network: &Network) -> Self {
        let n = network.node_count();
        let slots = n * network.stride();
        Self {
            stride: network.stride(),
            storage: vec![0.0; n],
            inputs: vec![0.0; slots],
            outputs: vec![0.0; slots],
            storage_potential: vec![0.0; n],
            channel_potential: vec![0.0; slots],
        }
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn node_count(&self) -> usize {
        self.storage.len()
    }

    pub fn fits(&self, network: &Network) -> bool {
        self.stride == network.stride()
            && self.storage.len() == network.node_count()
            && self.storage_potential.len() == self.storage.len()
            && [&self.inputs, &self.outputs, &self.channel_potential]
                .iter()
                .all(|v| v.len() == self.storage.len() * self.stride)
    }

    fn slots(&self, node: usize, degree: usize) -> std::ops::Range<usize> {
        let start = node * self.stride;
        start..start + degree
    }

    /// Local mass `S_o + sum(O)` at the post-collision instant.
    pub fn node_mass(&self, network: &Network, node: usize) -> f64 {
        let r = self.slots(node, network.degree(node));
        exact_sum(std::iter::once(self.storage[node]).chain(self.outputs[r].iter().copied()))
    }

    /// Total mass at the post-collision instant: storages plus outputs. The
    /// input buffers only record what was gathered and are not counted.
    pub fn total_mass(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.extend(self.storage.iter().copied());
        acc.extend(self.outputs.iter().copied());
        acc.value()
    }

    /// Extracts one node as a standalone [`KinonState`] (inputs included as
    /// recorded).
    pub fn node_state(&self, network: &Network, node: usize) -> KinonState {
        let r = self.slots(node, network.degree(node));
        let mut potentials = vec![self.storage_potential[node]];
        potentials.extend_from_slice(&self.channel_potential[r.clone()]);
        KinonState {
            inputs: self.inputs[r.clone()].to_vec(),
            outputs: self.outputs[r].to_vec(),
            storage: self.storage[node],
            potentials,
        }
    }

    pub fn set_node_state(&mut self, network: &Network, node: usize, state: &KinonState) {
        let k = network.degree(node);
        assert_eq!(state.degree(), k, "degree mismatch at node {node}");
        let r = self.slots(node, k);
        self.inputs[r.clone()].copy_from_slice(&state.inputs);
        self.outputs[r.clone()].copy_from_slice(&state.outputs);
        self.storage[node] = state.storage;
        self.storage_potential[node] = state.potentials[0];
        self.channel_potential[r].copy_from_slice(&state.potentials[1..]);
    }

    /// Storage-and-buffer contents equal within `tolerance` (potentials are
    /// not compared).
    pub fn mass_state_close(&self, other: &NetworkState, tolerance: f64) -> bool {
        let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tolerance);
        close(&self.storage, &other.storage) && close(&self.inputs, &other.inputs) && close(&self.outputs, &other.outputs)
    }
}

/// The singularity state: all of `omega` stored in one node.
pub fn init_singularity(network: &Network, omega: f64, position: usize) -> Result<NetworkState, KinonError> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(KinonError::InvalidOmega(omega));
    }
    if position >= network.node_count() {
        let (width, height) = network
            .geometry()
            .map(|g| (g.width, g.height))
            .unwrap_or((network.node_count(), 1));
        return Err(KinonError::PositionOutOfRange {
            x: position % width.max(1),
            y: position / width.max(1),
            width,
            height,
        });
    }
    let mut state = NetworkState::zeros(network);
    state.storage[position] = omega;
    Ok(state)
}

/// Moves every output into the reciprocal input slot and clears the outputs.
/// Each input slot has exactly one writer, so this is a permutation of
/// buffer contents.
pub fn propagate(network: &Network, state: &mut NetworkState, execution: Execution) {
    debug_assert!(state.fits(network));
    let stride = network.stride();
    let outputs = &state.outputs;
    let pull = |(node, inputs): (usize, &mut [f64])| {
        let k = network.degree(node);
        for (slot, input) in inputs[..k].iter_mut().enumerate() {
            *input = outputs[network.reciprocal_index(node * stride + slot)];
        }
    };
    match execution {
        Execution::Sequential => state.inputs.chunks_mut(stride).enumerate().for_each(pull),
        Execution::Parallel => state.inputs.par_chunks_mut(stride).enumerate().for_each(pull),
    }
    state.outputs.fill(0.0);
}

/// Collides every node in place, writing one tally per node.
pub fn collide_all(
    network: &Network,
    state: &mut NetworkState,
    params: &ModelParams,
    execution: Execution,
    tallies: &mut Vec<NodeTally>,
) {
    debug_assert!(state.fits(network));
    let stride = network.stride();
    tallies.clear();
    tallies.resize(network.node_count(), NodeTally::default());
    let NetworkState {
        storage,
        inputs,
        outputs,
        storage_potential,
        channel_potential,
        ..
    } = state;
    let kernel = |(node, (((((tally, inputs), outputs), storage), storage_potential), channel_potential)): (
        usize,
        (((((&mut NodeTally, &[f64]), &mut [f64]), &mut f64), &mut f64), &mut [f64]),
    )| {
        let k = network.degree(node);
        *tally = collide_channels(
            &inputs[..k],
            &mut outputs[..k],
            storage,
            storage_potential,
            &mut channel_potential[..k],
            params,
        );
    };
    match execution {
        Execution::Sequential => tallies
            .iter_mut()
            .zip(inputs.chunks(stride))
            .zip(outputs.chunks_mut(stride))
            .zip(storage.iter_mut())
            .zip(storage_potential.iter_mut())
            .zip(channel_potential.chunks_mut(stride))
            .enumerate()
            .for_each(kernel),
        Execution::Parallel => tallies
            .par_iter_mut()
            .zip(inputs.par_chunks(stride))
            .zip(outputs.par_chunks_mut(stride))
            .zip(storage.par_iter_mut())
            .zip(storage_potential.par_iter_mut())
            .zip(channel_potential.par_chunks_mut(stride))
            .enumerate()
            .for_each(kernel),
    }
}

/// Network-wide totals of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CycleStats {
    /// Index of the cycle these totals belong to (1 for the first step).
    pub cycle: u64,
    /// Sum of all output buffers.
    pub emitted: f64,
    /// Sum over nodes of `|delta S_o|`.
    pub storage_change: f64,
    /// Sum over links of `|I - O|`.
    pub exchange_change: f64,
    /// Sum of all storages and outputs after collision.
    pub total_mass: f64,
    /// Sum of all input storages, i.e. the mass before collision.
    pub gathered_mass: f64,
}

impl CycleStats {
    /// `sum(O) / omega`. The denominator is raised to the measured mass when
    /// rounding has pushed that above `omega`, which keeps the rate in
    /// `[0, 1]`; the `min` absorbs summation rounding between the two totals.
    pub fn exchange_rate(&self, omega: f64) -> f64 {
        self.emitted.min(self.total_mass) / omega.max(self.total_mass)
    }

    /// `(sum |dS| + sum |I - O|) / (2 omega)`, bounded the same way by the
    /// masses before and after collision.
    pub fn turnover_rate(&self, omega: f64) -> f64 {
        let bound = self.gathered_mass + self.total_mass;
        let change = exact_sum([self.storage_change, self.exchange_change]);
        change.min(bound) / (2.0 * omega).max(bound)
    }

    /// Relative conservation drift `|total - omega| / omega`.
    pub fn drift(&self, omega: f64) -> f64 {
        (self.total_mass - omega).abs() / omega
    }

    fn from_tallies(cycle: u64, tallies: &[NodeTally]) -> Self {
        let mut emitted = CompensatedSum::new();
        let mut storage_change = CompensatedSum::new();
        let mut exchange_change = CompensatedSum::new();
        let mut mass = CompensatedSum::new();
        let mut gathered = CompensatedSum::new();
        for t in tallies {
            gathered.add(t.gathered);
            emitted.add(t.emitted);
            storage_change.add(t.storage_change);
            exchange_change.add(t.exchange_change);
            mass.add(t.mass);
        }
        Self {
            cycle,
            emitted: emitted.value(),
            storage_change: storage_change.value(),
            exchange_change: exchange_change.value(),
            total_mass: mass.value(),
            gathered_mass: gathered.value(),
        }
    }
}

/// One full cycle with a caller-owned tally buffer.
pub fn step_with(
    network: &Network,
    state: &mut NetworkState,
    params: &ModelParams,
    execution: Execution,
    cycle: u64,
    tallies: &mut Vec<NodeTally>,
) -> CycleStats {
    propagate(network, state, execution);
    collide_all(network, state, params, execution, tallies);
    CycleStats::from_tallies(cycle, tallies)
}

/// One full cycle. `cycle` labels the returned stats.
pub fn step(network: &Network, state: &mut NetworkState, params: &ModelParams, cycle: u64) -> CycleStats {
    step_with(network, state, params, Execution::default(), cycle, &mut Vec::new())
}

/// A network, its state and the running parameter set.
#[derive(Debug, Clone)]
pub struct Simulation {
    network: Network,
    state: NetworkState,
    params: ModelParams,
    omega: f64,
    cycle: u64,
    execution: Execution,
    tallies: Vec<NodeTally>,
}

impl Simulation {
    /// Starts from the singularity state at `seed`.
    pub fn new(network: Network, params: ModelParams, omega: f64, seed: usize) -> Result<Self, KinonError> {
        params.validate(Some(omega))?;
        let state = init_singularity(&network, omega, seed)?;
        Ok(Self {
            network,
            state,
            params,
            omega,
            cycle: 0,
            execution: Execution::default(),
            tallies: Vec::new(),
        })
    }

    /// Resumes from an existing state.
    pub fn from_state(
        network: Network,
        state: NetworkState,
        params: ModelParams,
        omega: f64,
        cycle: u64,
    ) -> Result<Self, KinonError> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(KinonError::InvalidOmega(omega));
        }
        params.validate(Some(omega))?;
        if !state.fits(&network) {
            return Err(KinonError::ShapeMismatch("buffer sizes differ from the network layout".into()));
        }
        Ok(Self {
            network,
            state,
            params,
            omega,
            cycle,
            execution: Execution::default(),
            tallies: Vec::new(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn set_execution(&mut self, execution: Execution) {
        self.execution = execution;
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Number of completed cycles.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Replaces the parameter set; takes effect on the next cycle.
    pub fn set_params(&mut self, params: ModelParams) -> Result<(), KinonError> {
        params.validate(Some(self.omega))?;
        self.params = params;
        Ok(())
    }

    pub fn step(&mut self) -> CycleStats {
        self.cycle += 1;
        step_with(
            &self.network,
            &mut self.state,
            &self.params,
            self.execution,
            self.cycle,
            &mut self.tallies,
        )
    }

    /// Runs `cycles` steps and returns the last stats, if any.
    pub fn run(&mut self, cycles: u64) -> Option<CycleStats> {
        (0..cycles).map(|_| self.step()).last()
    }

    /// Total local mass per node.
    pub fn field(&self) -> FieldSnapshot {
        FieldSnapshot::mass(&self.network, &self.state, self.cycle)
    }

    pub fn storage_field(&self) -> FieldSnapshot {
        FieldSnapshot::storage(&self.network, &self.state, self.cycle)
    }
}

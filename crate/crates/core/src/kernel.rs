//! The kinon collision operator.
//!
//! A collision turns the quantities gathered by one node into new outputs in
//! three stages:
//!
//! 1. **encode**: gather the storage and inputs into `S_i`, feed every
//!    channel's observation through its leaky integrator (`lambda`), measure
//!    the resulting potentials with the psi map and normalise them into ranks;
//! 2. **modulate**: map every rank, storage rank included, through the
//!    kinetic map `max(0, 1 - kappa * x)` to obtain rates;
//! 3. **decode**: withhold the shunt fraction `eta` of `S_i`, scatter the rest
//!    proportionally to the channel rates, drop outputs below `theta`, and keep
//!    everything not emitted in storage.
//!
//! Potentials only steer the split. Mass always flows through `S_i`, so the
//! node-local total is conserved for every parameter choice.
//!
//! Channel index 0 in ranks, rates and percepts is the storage channel;
//! indices `1..=k` are the link channels in network slot order.

use serde::{Deserialize, Serialize};

use crate::error::{FieldError, ValidationError};
use crate::sum::{exact_sum, exact_sum_small};

/// Largest supported node degree (Moore neighbourhood).
pub const MAX_DEGREE: usize = 8;
/// Storage channel plus up to [`MAX_DEGREE`] link channels.
pub const MAX_CHANNELS: usize = MAX_DEGREE + 1;

/// Measurement map applied to the integrated potentials before ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PsiSpec {
    #[default]
    Identity,
    Log1p,
    Power {
        gamma: f64,
    },
}

impl PsiSpec {
    pub fn power(gamma: f64) -> Result<Self, ValidationError> {
        let spec = PsiSpec::Power { gamma };
        spec.validate().map(|()| spec)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        match *self {
            PsiSpec::Power { gamma } if !(gamma.is_finite() && gamma > 0.0) => Err(
                ValidationError::single("gamma", format!("must be finite and > 0, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        psi_eval(self, x)
    }
}

/// Evaluates the psi map at a non-negative point.
#[inline]
pub fn psi_eval(spec: &PsiSpec, x: f64) -> f64 {
    match *spec {
        PsiSpec::Identity => x,
        PsiSpec::Log1p => x.ln_1p(),
        PsiSpec::Power { gamma } => x.powf(gamma),
    }
}

/// Maps a rank to a rate.
pub trait KineticMap {
    fn rate(&self, rank: f64) -> f64;
}

/// The affine kinetic map `y = max(0, 1 - kappa * x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub kappa: f64,
}

impl KineticMap for AffineMap {
    #[inline]
    fn rate(&self, rank: f64) -> f64 {
        kinetic_map(rank, self.kappa)
    }
}

#[inline]
pub fn kinetic_map(x: f64, kappa: f64) -> f64 {
    (1.0 - kappa * x).max(0.0)
}

/// One leaky integrator step: `lambda * potential + observed`.
#[inline]
pub fn leaky_update(potential: f64, observed: f64, lambda: f64) -> f64 {
    lambda * potential + observed
}

/// The tunable parameter set of the extended model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub kappa: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub psi: PsiSpec,
}

impl ModelParams {
    /// The basic model: every filter disabled.
    pub fn basic(kappa: f64) -> Self {
        Self {
            kappa,
            lambda: 0.0,
            eta: 0.0,
            theta: 0.0,
            psi: PsiSpec::Identity,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_psi(mut self, psi: PsiSpec) -> Self {
        self.psi = psi;
        self
    }

    /// True when the pipeline reduces to the basic model.
    pub fn is_basic(&self) -> bool {
        self.lambda == 0.0 && self.eta == 0.0 && self.theta == 0.0 && self.psi == PsiSpec::Identity
    }

    /// Checks parameter ranges. When `omega` is known, `theta` must also stay
    /// at or below `omega / 100`.
    pub fn validate(&self, omega: Option<f64>) -> Result<(), ValidationError> {
        let mut errors = Vec::new();
        let finite_nonneg = |name: &str, v: f64, errors: &mut Vec<FieldError>| {
            if !(v.is_finite() && v >= 0.0) {
                errors.push(FieldError::new(name, format!("must be finite and >= 0, got {v}")));
                false
            } else {
                true
            }
        };
        finite_nonneg("kappa", self.kappa, &mut errors);
        for (name, v) in [("lambda", self.lambda), ("eta", self.eta)] {
            if finite_nonneg(name, v, &mut errors) && v > 1.0 {
                errors.push(FieldError::new(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if finite_nonneg("theta", self.theta, &mut errors) {
            if let Some(omega) = omega {
                let bound = omega / 100.0;
                if self.theta > bound {
                    errors.push(FieldError::new(
                        "theta",
                        format!("must not exceed omega/100 = {bound}, got {}", self.theta),
                    ));
                }
            }
        }
        if let Err(e) = self.psi.validate() {
            errors.extend(e.0.into_iter().map(|f| f.nested("psi")));
        }
        ValidationError::from_list(errors)
    }

    pub fn apply(&self, patch: &ParamPatch) -> Self {
        Self {
            kappa: patch.kappa.unwrap_or(self.kappa),
            lambda: patch.lambda.unwrap_or(self.lambda),
            eta: patch.eta.unwrap_or(self.eta),
            theta: patch.theta.unwrap_or(self.theta),
            psi: patch.psi.unwrap_or(self.psi),
        }
    }
}

/// A partial parameter update; absent fields keep their current value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiSpec>,
}

impl ParamPatch {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// Merges a later patch over this one.
    pub fn merge(&mut self, later: &ParamPatch) {
        self.kappa = later.kappa.or(self.kappa);
        self.lambda = later.lambda.or(self.lambda);
        self.eta = later.eta.or(self.eta);
        self.theta = later.theta.or(self.theta);
        self.psi = later.psi.or(self.psi);
    }
}

/// Mutable state of a single kinon.
#[derive(Debug, Clone, PartialEq)]
pub struct KinonState {
    /// Inflow per link channel, filled by propagation.
    pub inputs: Vec<f64>,
    /// Outflow per link channel, filled by decoding.
    pub outputs: Vec<f64>,
    /// Persistent output storage `S_o`.
    pub storage: f64,
    /// Channel potentials; index 0 belongs to the storage channel.
    pub potentials: Vec<f64>,
}

impl KinonState {
    pub fn new(degree: usize) -> Self {
        assert!(degree <= MAX_DEGREE, "degree {degree} exceeds {MAX_DEGREE}");
        Self {
            inputs: vec![0.0; degree],
            outputs: vec![0.0; degree],
            storage: 0.0,
            potentials: vec![0.0; degree + 1],
        }
    }

    pub fn with_inputs(inputs: &[f64], storage: f64) -> Self {
        let mut state = Self::new(inputs.len());
        state.inputs.copy_from_slice(inputs);
        state.storage = storage;
        state
    }

    pub fn degree(&self) -> usize {
        self.inputs.len()
    }

    /// Everything the node currently holds: storage plus both buffer sets.
    pub fn mass(&self) -> f64 {
        exact_sum(
            std::iter::once(self.storage)
                .chain(self.inputs.iter().copied())
                .chain(self.outputs.iter().copied()),
        )
    }
}

/// Intermediate values of one collision, kept for inspection and analysis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollisionTrace {
    /// Input storage `S_i`: storage plus all inflow.
    pub gathered: f64,
    /// The inflow that was gathered, per link channel.
    pub inputs: Vec<f64>,
    /// psi-measured potentials, storage channel first.
    pub percepts: Vec<f64>,
    /// Sum of the percepts.
    pub measured_total: f64,
    pub ranks: Vec<f64>,
    pub rates: Vec<f64>,
    /// `eta * S_i`, withheld from distribution.
    pub shunted: f64,
    /// `S_i - shunted`, the distributable part.
    pub distributable: f64,
    /// Outputs before theta truncation, per link channel.
    pub raw_outputs: Vec<f64>,
}

/// Result of the slice-level encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encoded {
    pub gathered: f64,
    pub measured_total: f64,
}

/// Result of the slice-level decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub shunted: f64,
    pub distributable: f64,
    pub storage: f64,
    /// Sum of the emitted outputs.
    pub emitted: f64,
}

/// Encoder over raw slices. `percepts` and `ranks` hold `k + 1` entries.
#[inline]
pub fn encode_channels(
    storage: f64,
    inputs: &[f64],
    storage_potential: &mut f64,
    channel_potentials: &mut [f64],
    params: &ModelParams,
    percepts: &mut [f64],
    ranks: &mut [f64],
) -> Encoded {
    let k = inputs.len();
    debug_assert_eq!(channel_potentials.len(), k);
    debug_assert_eq!(percepts.len(), k + 1);
    debug_assert_eq!(ranks.len(), k + 1);

    let mut gather = [0.0; MAX_CHANNELS];
    gather[0] = storage;
    gather[1..=k].copy_from_slice(inputs);
    let gathered = exact_sum_small(&gather[..=k]);

    *storage_potential = leaky_update(*storage_potential, storage, params.lambda);
    percepts[0] = psi_eval(&params.psi, *storage_potential);
    for ((pot, &x), percept) in channel_potentials.iter_mut().zip(inputs).zip(&mut percepts[1..]) {
        *pot = leaky_update(*pot, x, params.lambda);
        *percept = psi_eval(&params.psi, *pot);
    }

    let measured_total = exact_sum_small(percepts);
    if measured_total > 0.0 {
        for (rank, &p) in ranks.iter_mut().zip(percepts.iter()) {
            *rank = p / measured_total;
        }
    } else {
        ranks.fill(0.0);
    }
    Encoded {
        gathered,
        measured_total,
    }
}

/// Modulator over raw slices, any kinetic map.
#[inline]
pub fn modulate_with<M: KineticMap>(map: &M, ranks: &[f64], rates: &mut [f64]) {
    for (rate, &rank) in rates.iter_mut().zip(ranks) {
        *rate = map.rate(rank);
    }
}

/// Decoder over raw slices. `rates` holds `k + 1` entries, `raw_outputs` and
/// `outputs` hold `k`.
#[inline]
pub fn decode_channels(
    gathered: f64,
    rates: &[f64],
    params: &ModelParams,
    raw_outputs: &mut [f64],
    outputs: &mut [f64],
) -> Decoded {
    debug_assert_eq!(rates.len(), outputs.len() + 1);
    let shunted = params.eta * gathered;
    let distributable = gathered - shunted;
    let rate_total = exact_sum_small(rates);
    if rate_total > 0.0 {
        for (raw, &rate) in raw_outputs.iter_mut().zip(&rates[1..]) {
            *raw = rate * distributable / rate_total;
        }
    } else {
        raw_outputs.fill(0.0);
    }
    for (out, &raw) in outputs.iter_mut().zip(raw_outputs.iter()) {
        *out = if raw >= params.theta { raw } else { 0.0 };
    }
    // Rounding in the proportional split may overshoot S_i by an ulp; the
    // clamp keeps storage non-negative at the cost of that ulp.
    let emitted = exact_sum_small(outputs);
    let storage = (gathered - emitted).max(0.0);
    Decoded {
        shunted,
        distributable,
        storage,
        emitted,
    }
}

/// Per-node figures produced by the allocation-free collision path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeTally {
    /// Sum of emitted outputs.
    pub emitted: f64,
    /// `|S_o(after) - S_o(before)|`.
    pub storage_change: f64,
    /// Sum over channels of `|I_j - O_j|`.
    pub exchange_change: f64,
    /// Storage plus emitted outputs after collision.
    pub mass: f64,
    /// Input storage `S_i`, the node's mass before collision.
    pub gathered: f64,
}

/// Full collision of one node held in raw slices. Inputs are left in place
/// as the record of what was gathered; the caller owns their lifecycle.
#[inline]
pub fn collide_channels(
    inputs: &[f64],
    outputs: &mut [f64],
    storage: &mut f64,
    storage_potential: &mut f64,
    channel_potentials: &mut [f64],
    params: &ModelParams,
) -> NodeTally {
    let k = inputs.len();
    let mut percepts = [0.0; MAX_CHANNELS];
    let mut ranks = [0.0; MAX_CHANNELS];
    let mut rates = [0.0; MAX_CHANNELS];
    let mut raw = [0.0; MAX_DEGREE];

    let before = *storage;
    let enc = encode_channels(
        before,
        inputs,
        storage_potential,
        channel_potentials,
        params,
        &mut percepts[..=k],
        &mut ranks[..=k],
    );
    modulate_with(&AffineMap { kappa: params.kappa }, &ranks[..=k], &mut rates[..=k]);
    let dec = decode_channels(enc.gathered, &rates[..=k], params, &mut raw[..k], outputs);
    *storage = dec.storage;

    NodeTally {
        emitted: dec.emitted,
        storage_change: (dec.storage - before).abs(),
        exchange_change: inputs.iter().zip(outputs.iter()).map(|(i, o)| (i - o).abs()).sum(),
        mass: dec.storage + dec.emitted,
        gathered: enc.gathered,
    }
}

/// Encoder stage on a [`KinonState`]. Updates the potentials and returns a
/// trace holding `S_i`, percepts and ranks.
pub fn encode(state: &mut KinonState, params: &ModelParams) -> CollisionTrace {
    let k = state.degree();
    let mut trace = CollisionTrace {
        inputs: state.inputs.clone(),
        percepts: vec![0.0; k + 1],
        ranks: vec![0.0; k + 1],
        rates: vec![0.0; k + 1],
        raw_outputs: vec![0.0; k],
        ..Default::default()
    };
    let (storage_potential, channel_potentials) = state
        .potentials
        .split_first_mut()
        .expect("potentials hold the storage channel");
    let enc = encode_channels(
        state.storage,
        &state.inputs,
        storage_potential,
        channel_potentials,
        params,
        &mut trace.percepts,
        &mut trace.ranks,
    );
    trace.gathered = enc.gathered;
    trace.measured_total = enc.measured_total;
    trace
}

/// Modulator stage: fills `trace.rates` from `trace.ranks`.
pub fn modulate(trace: &mut CollisionTrace, kappa: f64) {
    modulate_with(&AffineMap { kappa }, &trace.ranks, &mut trace.rates);
}

/// Decoder stage: scatters `S_i` into the outputs, refills storage and
/// clears the inputs.
pub fn decode(state: &mut KinonState, trace: &mut CollisionTrace, params: &ModelParams) {
    let dec = decode_channels(
        trace.gathered,
        &trace.rates,
        params,
        &mut trace.raw_outputs,
        &mut state.outputs,
    );
    trace.shunted = dec.shunted;
    trace.distributable = dec.distributable;
    state.storage = dec.storage;
    state.inputs.fill(0.0);
}

/// encode, modulate, decode.
pub fn collide(state: &mut KinonState, params: &ModelParams) -> CollisionTrace {
    let mut trace = encode(state, params);
    modulate(&mut trace, params.kappa);
    decode(state, &mut trace, params);
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinetic_map_examples() {
        assert_eq!(kinetic_map(0.0, 3.0), 1.0);
        assert_eq!(kinetic_map(0.5, 3.0), 0.0);
        assert!((kinetic_map(0.2, 3.0) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn leaky_update_examples() {
        assert_eq!(leaky_update(7.0, 2.0, 0.0), 2.0);
        assert_eq!(leaky_update(7.0, 2.0, 1.0), 9.0);
        assert_eq!(leaky_update(4.0, 1.0, 0.5), 3.0);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi_eval(&PsiSpec::Identity, 3.5), 3.5);
        assert_eq!(psi_eval(&PsiSpec::Log1p, 0.0), 0.0);
        assert_eq!(psi_eval(&PsiSpec::power(2.0).unwrap(), 3.0), 9.0);
        assert!(PsiSpec::power(0.0).is_err());
        assert!(PsiSpec::power(-1.0).is_err());
        assert!(PsiSpec::power(f64::NAN).is_err());
    }

    #[test]
    fn encode_basic_ranks() {
        let mut s = KinonState::with_inputs(&[1.0, 2.0, 3.0, 4.0], 10.0);
        let t = encode(&mut s, &ModelParams::basic(3.0));
        assert_eq!(t.gathered, 20.0);
        assert_eq!(t.ranks, vec![0.5, 0.05, 0.10, 0.15, 0.20]);
    }

    #[test]
    fn encode_empty_node() {
        let mut s = KinonState::new(4);
        let t = encode(&mut s, &ModelParams::basic(3.0));
        assert_eq!(t.gathered, 0.0);
        assert!(t.ranks.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn encode_with_perfect_integrator() {
        // A' = 1 * (0, 1, 1) + (0, 3, 1) = (0, 4, 2); T = 6.
        let mut s = KinonState::with_inputs(&[3.0, 1.0], 0.0);
        s.potentials = vec![0.0, 1.0, 1.0];
        let t = encode(&mut s, &ModelParams::basic(1.0).with_lambda(1.0));
        assert_eq!(s.potentials, vec![0.0, 4.0, 2.0]);
        assert_eq!(t.gathered, 4.0);
        assert_eq!(t.ranks, vec![0.0, 4.0 / 6.0, 2.0 / 6.0]);
    }

    #[test]
    fn modulate_examples() {
        let mut t = CollisionTrace {
            ranks: vec![0.5, 0.5],
            rates: vec![0.0; 2],
            ..Default::default()
        };
        modulate(&mut t, 1.0);
        assert_eq!(t.rates, vec![0.5, 0.5]);

        t.ranks = vec![1.0, 0.0, 0.0];
        t.rates = vec![0.0; 3];
        modulate(&mut t, 2.0);
        assert_eq!(t.rates, vec![0.0, 1.0, 1.0]);

        t.ranks = vec![0.0; 5];
        t.rates = vec![0.0; 5];
        modulate(&mut t, 7.5);
        assert!(t.rates.iter().all(|&r| r == 1.0));
    }

    fn decode_uniform(eta: f64, theta: f64) -> KinonState {
        let mut s = KinonState::new(4);
        let mut t = CollisionTrace {
            gathered: 20.0,
            rates: vec![0.3; 5],
            raw_outputs: vec![0.0; 4],
            ..Default::default()
        };
        let p = ModelParams::basic(1.0).with_eta(eta).with_theta(theta);
        decode(&mut s, &mut t, &p);
        assert_eq!(t.shunted + t.distributable, 20.0);
        s
    }

    #[test]
    fn decode_examples() {
        let s = decode_uniform(0.0, 0.0);
        assert_eq!(s.outputs, vec![4.0; 4]);
        assert_eq!(s.storage, 4.0);

        let s = decode_uniform(0.5, 0.0);
        assert_eq!(s.outputs, vec![2.0; 4]);
        assert_eq!(s.storage, 12.0);

        let s = decode_uniform(0.5, 3.0);
        assert_eq!(s.outputs, vec![0.0; 4]);
        assert_eq!(s.storage, 20.0);
    }

    #[test]
    fn zero_rates_keep_everything() {
        let mut s = KinonState::new(2);
        let mut t = CollisionTrace {
            gathered: 5.0,
            rates: vec![0.0; 3],
            raw_outputs: vec![0.0; 2],
            ..Default::default()
        };
        decode(&mut s, &mut t, &ModelParams::basic(1.0));
        assert_eq!(s.outputs, vec![0.0, 0.0]);
        assert_eq!(s.storage, 5.0);
    }

    #[test]
    fn collide_hand_evaluated() {
        // S_i = 20, R = (0.5, .05, .1, .15, .2), kappa = 3:
        // rates = (0, .85, .7, .55, .4), sum 2.5, O = rate * 20 / 2.5 = 8 * rate.
        let mut s = KinonState::with_inputs(&[1.0, 2.0, 3.0, 4.0], 10.0);
        let t = collide(&mut s, &ModelParams::basic(3.0));
        let expected = [6.8, 5.6, 4.4, 3.2];
        for (o, e) in s.outputs.iter().zip(expected) {
            assert!((o - e).abs() < 1e-12, "{o} vs {e}");
        }
        assert!(s.storage.abs() < 1e-12);
        assert_eq!(s.inputs, vec![0.0; 4]);
        assert_eq!(t.rates[0], 0.0);
    }

    #[test]
    fn empty_node_stays_empty() {
        let mut s = KinonState::new(4);
        collide(&mut s, &ModelParams::basic(3.0).with_lambda(0.7).with_eta(0.2));
        assert_eq!(s, KinonState::new(4));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::basic(3.0).validate(Some(100.0)).is_ok());
        let bad = ModelParams {
            kappa: -1.0,
            lambda: 1.5,
            eta: f64::NAN,
            theta: 2.0,
            psi: PsiSpec::Power { gamma: 0.0 },
        };
        let err = bad.validate(Some(100.0)).unwrap_err();
        let paths: Vec<_> = err.fields().iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["kappa", "lambda", "eta", "theta", "psi.gamma"]);
        // theta = omega is far above omega / 100
        assert!(ModelParams::basic(1.0).with_theta(50.0).validate(Some(50.0)).is_err());
        assert!(ModelParams::basic(1.0).with_theta(0.5).validate(Some(50.0)).is_ok());
    }

    #[test]
    fn patch_merges() {
        let mut a = ParamPatch {
            kappa: Some(4.0),
            ..Default::default()
        };
        a.merge(&ParamPatch {
            eta: Some(0.1),
            ..Default::default()
        });
        let p = ModelParams::basic(3.0).apply(&a);
        assert_eq!(p, ModelParams::basic(4.0).with_eta(0.1));
    }
}

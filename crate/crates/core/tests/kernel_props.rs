mod common;

use kinon_core::kernel::{collide, encode, KinonState};
use kinon_core::{ModelParams, PsiSpec};
use proptest::prelude::*;

fn quantity() -> impl Strategy<Value = f64> {
    prop_oneof![
        2 => Just(0.0),
        1 => Just(0.5),
        2 => 0.0..1e-3f64,
        5 => 0.0..4.0f64,
        2 => 0.0..1e3f64,
    ]
}

fn node() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(quantity(), 1..=8), quantity())
}

fn psi() -> impl Strategy<Value = PsiSpec> {
    prop_oneof![
        Just(PsiSpec::Identity),
        Just(PsiSpec::Log1p),
        (0.1..3.0f64).prop_map(|gamma| PsiSpec::Power { gamma }),
    ]
}

fn params() -> impl Strategy<Value = ModelParams> {
    (0.0..12.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..2.0f64, psi()).prop_map(|(kappa, lambda, eta, theta, psi)| {
        ModelParams {
            kappa,
            lambda,
            eta,
            theta,
            psi,
        }
    })
}

/// Some steps of history so the potentials are non-trivial.
fn warmed(inputs: &[f64], storage: f64, params: &ModelParams, history: usize) -> KinonState {
    let mut s = KinonState::with_inputs(inputs, storage);
    for _ in 0..history {
        collide(&mut s, params);
        // Feed the outputs back, as a node whose links are looped would.
        s.inputs = s.outputs.clone();
    }
    s
}

#[test]
fn rounding_oracle_agrees_with_hardware_arithmetic() {
    for (a, b) in [(0.1, 0.2), (1.0, 3.0), (1e300, 7.0), (5e-324, 3.0), (2.0, 1.0), (1.0, 1e-310)] {
        let q = common::rational(a) / common::rational(b);
        assert_eq!(common::round_to_f64(&q), a / b, "{a} / {b}");
        let s = common::rational(a) + common::rational(b);
        assert_eq!(common::round_to_f64(&s), a + b, "{a} + {b}");
    }
    assert_eq!(common::round_to_f64(&common::rational(-0.75)), -0.75);
    // 1 + 2^-53 is a tie and rounds to even.
    assert_eq!(common::exact_sum(&[1.0, 2f64.powi(-53)]), 1.0);
    assert_eq!(common::exact_sum(&[1e16, 1.0, -1e16]), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn disabled_filters_reduce_to_basic_model((inputs, storage) in node(), kappa in 0.0..12.0f64) {
        let mut s = KinonState::with_inputs(&inputs, storage);
        collide(&mut s, &ModelParams::basic(kappa));
        let (outputs, left) = common::basic_collide(storage, &inputs, kappa);
        prop_assert_eq!(s.outputs.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        outputs.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(s.storage.to_bits(), left.to_bits());
    }

    #[test]
    fn collision_conserves_gathered_quantity((inputs, storage) in node(), p in params()) {
        let mut s = warmed(&inputs, storage, &p, 3);
        let before = common::exact_sum(&[&s.inputs[..], &[s.storage]].concat());
        collide(&mut s, &p);
        prop_assert!(s.storage >= 0.0 && s.outputs.iter().all(|&o| o >= 0.0));
        let after = common::exact_sum(&[&s.outputs[..], &[s.storage]].concat());
        prop_assert!((after - before).abs() <= 4.0 * f64::EPSILON * before, "{before} -> {after}");
    }

    #[test]
    fn ranks_sum_to_one_or_vanish((inputs, storage) in node(), p in params()) {
        let mut s = warmed(&inputs, storage, &p, 2);
        let trace = encode(&mut s, &p);
        prop_assert!(trace.ranks.iter().all(|&r| (0.0..=1.0).contains(&r)));
        let total: f64 = common::exact_sum(&trace.ranks);
        if trace.measured_total > 0.0 {
            prop_assert!((total - 1.0).abs() <= 1e-15 * trace.ranks.len() as f64, "sum {total}");
        } else {
            prop_assert_eq!(total, 0.0);
        }
    }

    #[test]
    fn raising_theta_never_emits_more((inputs, storage) in node(), p in params(), extra in 0.0..2.0f64) {
        let mut lo = KinonState::with_inputs(&inputs, storage);
        let mut hi = lo.clone();
        collide(&mut lo, &p);
        collide(&mut hi, &p.with_theta(p.theta + extra));
        for (a, b) in lo.outputs.iter().zip(&hi.outputs) {
            prop_assert!(*b == 0.0 || b == a);
        }
        prop_assert!(hi.storage >= lo.storage);
    }

    #[test]
    fn raising_eta_never_emits_more((inputs, storage) in node(), p in params(), eta2 in 0.0..=1.0f64) {
        let (e1, e2) = (p.eta.min(eta2), p.eta.max(eta2));
        let mut lo = KinonState::with_inputs(&inputs, storage);
        let mut hi = lo.clone();
        let p = p.with_theta(0.0);
        collide(&mut lo, &p.with_eta(e1));
        collide(&mut hi, &p.with_eta(e2));
        for (a, b) in lo.outputs.iter().zip(&hi.outputs) {
            prop_assert!(b <= a, "{b} > {a}");
        }
        prop_assert!(hi.storage >= lo.storage);
    }

    #[test]
    fn identity_measurement_is_scale_invariant((inputs, storage) in node(), p in params(), k in -20i32..20) {
        // Power-of-two scaling is exact, so the invariance holds bit for bit.
        let p = p.with_psi(PsiSpec::Identity);
        let c = 2f64.powi(k);
        let scaled: Vec<f64> = inputs.iter().map(|v| v * c).collect();
        let mut a = KinonState::with_inputs(&inputs, storage);
        let mut b = KinonState::with_inputs(&scaled, storage * c);
        collide(&mut a, &p.with_theta(0.0));
        collide(&mut b, &p.with_theta(0.0));
        for (x, y) in a.outputs.iter().zip(&b.outputs) {
            prop_assert_eq!((x * c).to_bits(), y.to_bits());
        }
        prop_assert_eq!((a.storage * c).to_bits(), b.storage.to_bits());
    }

    #[test]
    fn channel_order_is_irrelevant((inputs, storage) in node(), p in params(), rot in 0usize..8) {
        let k = inputs.len();
        let rotated: Vec<f64> = (0..k).map(|j| inputs[(j + rot) % k]).collect();
        let mut a = warmed(&inputs, storage, &p, 2);
        let mut b = KinonState::with_inputs(&rotated, a.storage);
        b.potentials[0] = a.potentials[0];
        for j in 0..k {
            b.inputs[j] = a.inputs[(j + rot) % k];
            b.potentials[j + 1] = a.potentials[(j + rot) % k + 1];
        }
        collide(&mut a, &p);
        collide(&mut b, &p);
        for j in 0..k {
            prop_assert_eq!(b.outputs[j].to_bits(), a.outputs[(j + rot) % k].to_bits());
        }
        prop_assert_eq!(a.storage.to_bits(), b.storage.to_bits());
    }
}

#[test]
fn log1p_measurement_is_not_scale_invariant() {
    let p = ModelParams::basic(1.0).with_psi(PsiSpec::Log1p);
    let mut a = KinonState::with_inputs(&[1.0, 0.0, 3.0, 0.0], 0.0);
    let mut b = KinonState::with_inputs(&[4.0, 0.0, 12.0, 0.0], 0.0);
    collide(&mut a, &p);
    collide(&mut b, &p);
    let ratio: Vec<f64> = a.outputs.iter().zip(&b.outputs).map(|(x, y)| y / x).collect();
    assert!(a.outputs.iter().all(|&o| o > 0.0));
    assert!(ratio.iter().any(|r| (r - 4.0).abs() > 1e-3), "{ratio:?}");
    let mut c = KinonState::with_inputs(&[4.0, 0.0, 12.0, 0.0], 0.0);
    collide(&mut c, &p.with_psi(PsiSpec::Identity));
    let mut d = KinonState::with_inputs(&[1.0, 0.0, 3.0, 0.0], 0.0);
    collide(&mut d, &p.with_psi(PsiSpec::Identity));
    assert_eq!(c.outputs[0], 4.0 * d.outputs[0]);
}

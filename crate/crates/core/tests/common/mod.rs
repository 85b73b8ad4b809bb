//! Test oracles that share no code with the engine.
#![allow(dead_code)]

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kinon_core::analysis::{exchange_rate, turnover_rate};
use kinon_core::network::{build_grid, Boundary, DegreeClass, Execution, Network, NetworkState, Simulation};
use kinon_core::ModelParams;

pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

fn pow2(e: u64) -> BigUint {
    BigUint::from(1u8) << e
}

/// Correctly rounded (nearest, ties to even) conversion of an exact rational.
pub fn round_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let negative = r.is_negative();
    let n = r.numer().abs().to_biguint().expect("non-negative");
    let d = r.denom().abs().to_biguint().expect("positive");
    // Pick e so that q = floor(n / (d * 2^e)) has 53 significant bits,
    // or fewer in the subnormal range.
    let mut e = n.bits() as i64 - d.bits() as i64 - 53;
    let quotient = |e: i64| -> (BigUint, BigUint, BigUint) {
        let (num, den) = if e >= 0 {
            (n.clone(), &d * pow2(e as u64))
        } else {
            (&n * pow2((-e) as u64), d.clone())
        };
        let q = &num / &den;
        let rem = &num - &q * &den;
        (q, rem, den)
    };
    let (mut q, mut rem, mut den) = quotient(e);
    while q.bits() > 53 {
        e += 1;
        (q, rem, den) = quotient(e);
    }
    while q.bits() < 53 && e > -1074 {
        e -= 1;
        (q, rem, den) = quotient(e);
    }
    if e < -1074 {
        e = -1074;
        (q, rem, den) = quotient(e);
    }
    let twice = &rem * 2u8;
    let round_up = twice > den || (twice == den && q.bit(0));
    if round_up {
        q += 1u8;
    }
    let q: u64 = q.try_into().expect("at most 54 bits");
    let magnitude = ldexp(q as f64, e);
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

fn ldexp(m: f64, e: i64) -> f64 {
    let two = |k: i64| f64::from_bits(((k + 1023) as u64) << 52);
    if e > 1023 {
        return f64::INFINITY;
    }
    if e >= -1022 {
        return m * two(e);
    }
    // Exact: the mantissa was rounded to the subnormal grid.
    m * two(e + 1074) * f64::from_bits(1)
}

pub fn exact_sum(values: &[f64]) -> f64 {
    let total = values
        .iter()
        .fold(BigRational::from_integer(BigInt::from(0)), |acc, &v| acc + rational(v));
    round_to_f64(&total)
}

/// The basic model as a plain gather, rank, modulate, scatter sequence.
/// Returns `(outputs, new storage)`.
pub fn basic_collide(storage: f64, inputs: &[f64], kappa: f64) -> (Vec<f64>, f64) {
    let mut gathered: Vec<f64> = inputs.to_vec();
    gathered.push(storage);
    let s_i = exact_sum(&gathered);
    let rank = |q: f64| if s_i == 0.0 { 0.0 } else { q / s_i };
    let rate = |r: f64| {
        let y = 1.0 - kappa * r;
        if y > 0.0 {
            y
        } else {
            0.0
        }
    };
    let input_rates: Vec<f64> = inputs.iter().map(|&q| rate(rank(q))).collect();
    let storage_rate = rate(rank(storage));
    let mut all_rates = input_rates.clone();
    all_rates.push(storage_rate);
    let total_rate = exact_sum(&all_rates);
    let outputs: Vec<f64> = input_rates
        .iter()
        .map(|&r| if total_rate > 0.0 { r * s_i / total_rate } else { 0.0 })
        .collect();
    // Storage lives in the non-negative reals.
    let left = s_i - exact_sum(&outputs);
    (outputs, if left > 0.0 { left } else { 0.0 })
}

/// A quantity of varied magnitude, zero with some probability.
pub fn quantity<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..10) {
        0 | 1 => 0.0,
        2 => rng.gen_range(0.0..1e-3),
        3 => rng.gen_range(0.0..1e3),
        4 => 0.5,
        _ => rng.gen_range(0.0..4.0),
    }
}

pub fn degree_class<R: Rng>(rng: &mut R) -> DegreeClass {
    [DegreeClass::D4, DegreeClass::D8][rng.gen_range(0..2)]
}

pub fn boundary<R: Rng>(rng: &mut R) -> Boundary {
    [Boundary::Periodic, Boundary::Bordered][rng.gen_range(0..2)]
}

/// Random extended-model parameters valid for `omega`.
pub fn params<R: Rng>(rng: &mut R, omega: f64) -> ModelParams {
    use kinon_core::PsiSpec;
    let psi = match rng.gen_range(0..4) {
        0 => PsiSpec::Log1p,
        1 => PsiSpec::Power {
            gamma: rng.gen_range(0.1..3.0),
        },
        _ => PsiSpec::Identity,
    };
    let pick = |rng: &mut R, p_zero: f64, hi: f64| if rng.gen_bool(p_zero) { 0.0 } else { rng.gen_range(0.0..=hi) };
    ModelParams {
        kappa: rng.gen_range(0.0..12.0),
        lambda: if rng.gen_bool(0.2) { 1.0 } else { pick(rng, 0.3, 1.0) },
        eta: pick(rng, 0.5, 0.9),
        theta: pick(rng, 0.4, (omega / 100.0).min(2.0)),
        psi,
    }
}

/// Spreads `omega` over a few random nodes' storage.
pub fn scattered_state<R: Rng>(rng: &mut R, net: &Network, omega: f64) -> NetworkState {
    let mut st = NetworkState::zeros(net);
    let spots = rng.gen_range(1..=4);
    for _ in 0..spots {
        st.storage[rng.gen_range(0..net.node_count())] += omega / spots as f64;
    }
    st
}

/// Outcome of a fuzzed batch of 8x8 runs.
#[derive(Default)]
pub struct FuzzTally {
    pub cycles: usize,
    pub quiet: usize,
    pub fixed: usize,
    pub out_of_range: usize,
    /// `K_t = 0` but re-stepping moves mass.
    pub quiet_not_fixed: Vec<String>,
    /// Re-stepping changes nothing but `K_t > 0`.
    pub fixed_not_quiet: Vec<String>,
    /// Memoryless runs (`lambda = 0`) where both indices are zero and yet
    /// re-stepping moves mass. This direction is a theorem.
    pub memoryless_stasis_not_fixed: Vec<String>,
}

impl FuzzTally {
    pub fn disagreements(&self) -> usize {
        self.quiet_not_fixed.len() + self.fixed_not_quiet.len()
    }
}

/// For every cycle `c`: both indices lie in `[0, 1]`, and whether `K_t(c) = 0`
/// agrees with re-stepping the post-collision state of `c` leaving storage,
/// inputs and outputs bit-identical.
pub fn fuzz_indices(seed: u64, runs: usize, cycles: usize) -> FuzzTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = FuzzTally::default();
    for run in 0..runs {
        let net = build_grid(degree_class(&mut rng), 8, 8, boundary(&mut rng)).unwrap();
        let omega = 32.0;
        let params = params(&mut rng, omega);
        let st = scattered_state(&mut rng, &net, omega);
        let mut sim = Simulation::from_state(net, st, params, omega, 0).unwrap().with_execution(Execution::Sequential);
        let mut prev = sim.state().clone();
        for _ in 0..cycles {
            let stats = sim.step();
            let cur = sim.state().clone();
            let ke = exchange_rate(&cur, omega).unwrap();
            let kt = turnover_rate(&prev, &cur, omega).unwrap();
            let in_range = [ke, kt, stats.exchange_rate(omega), stats.turnover_rate(omega)]
                .iter()
                .all(|v| (0.0..=1.0).contains(v));
            if !in_range {
                tally.out_of_range += 1;
            }
            let mut probe = sim.clone();
            probe.step();
            let fixed = probe.state().mass_state_close(&cur, 0.0);
            tally.cycles += 1;
            tally.quiet += (kt == 0.0) as usize;
            tally.fixed += fixed as usize;
            let note = || format!("run {run} cycle {} K_t={kt:e} K_e={ke:e} {params:?}", sim.cycle());
            if kt == 0.0 && !fixed {
                tally.quiet_not_fixed.push(note());
                if params.lambda == 0.0 && ke == 0.0 {
                    tally.memoryless_stasis_not_fixed.push(note());
                }
            }
            if kt != 0.0 && fixed {
                tally.fixed_not_quiet.push(note());
            }
            prev = cur;
        }
    }
    tally
}

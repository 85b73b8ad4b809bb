//! Correctly rounded floating point summation.
//!
//! Every per-node and per-network total in the engine goes through
//! [`exact_sum`]. The result is the exact real sum of the inputs rounded once
//! to the nearest `f64`, so it does not depend on the order of the terms. Two
//! consequences the rest of the crate relies on:
//!
//! * conservation audits see only the final rounding, not accumulated error;
//! * permuting a node's channels (a lattice reflection or rotation) cannot
//!   change any computed value, so symmetric initial states stay bit-exactly
//!   symmetric.
//!
//! The algorithm keeps a list of non-overlapping partial sums (Shewchuk's
//! adaptive expansion) and rounds the expansion with a half-even correction.

use smallvec::SmallVec;

/// Running exact accumulator. The partial count never exceeds the number of
/// terms added, so per-node sums stay inline; long sums over a whole network
/// may spill to the heap.
#[derive(Clone)]
pub struct ExactSum {
    partials: SmallVec<[f64; 12]>,
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for ExactSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactSum")
            .field("partials", &&self.partials[..])
            .finish()
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self {
            partials: SmallVec::new(),
        }
    }

    /// Adds one finite term.
    #[inline]
    pub fn add(&mut self, value: f64) {
        let mut x = value;
        let mut kept = 0;
        for idx in 0..self.partials.len() {
            let mut y = self.partials[idx];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    /// The correctly rounded value of everything added so far.
    pub fn value(&self) -> f64 {
        round_partials(&self.partials)
    }
}

impl Extend<f64> for ExactSum {
    fn extend<T: IntoIterator<Item = f64>>(&mut self, iter: T) {
        for v in iter {
            self.add(v);
        }
    }
}

/// Correctly rounded sum of a short slice (at most 16 terms), without the
/// spill check of [`ExactSum`]. This is the per-node hot path.
#[inline]
pub fn exact_sum_small(values: &[f64]) -> f64 {
    assert!(values.len() <= 16, "exact_sum_small takes at most 16 terms");
    let mut partials = [0.0f64; 16];
    let mut len = 0;
    for &value in values {
        let mut x = value;
        let mut kept = 0;
        for idx in 0..len {
            let mut y = partials[idx];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials[kept] = x;
        len = kept + 1;
    }
    round_partials(&partials[..len])
}

/// Rounds a non-overlapping expansion (increasing magnitude) to one `f64`.
#[inline]
fn round_partials(partials: &[f64]) -> f64 {
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // Round half to even across the boundary between the leading partial
    // and the remainder: if the next partial has the same sign as the
    // rounding error, the tie was broken the wrong way.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Neumaier-compensated running sum. Order dependent, but accurate to a
/// few ulps of the result; used for network-wide diagnostics where the
/// term order is fixed (node order).
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<T: IntoIterator<Item = f64>>(&mut self, iter: T) {
        for v in iter {
            self.add(v);
        }
    }
}

/// Correctly rounded sum of a sequence of finite values.
#[inline]
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = ExactSum::new();
    acc.extend(values);
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn cancellation_is_exact() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
    }

    #[test]
    fn order_does_not_matter() {
        let a = [0.1, 0.7, 1e-17, 3.3, 1e16, -1e16, 2.5e-9];
        let mut b = a;
        b.reverse();
        assert_eq!(exact_sum(a).to_bits(), exact_sum(b).to_bits());
    }

    #[test]
    fn small_path_matches() {
        let a = [0.1, 0.7, 1e-17, 3.3, 1e16, -1e16, 2.5e-9, 1.0 / 3.0];
        assert_eq!(exact_sum_small(&a).to_bits(), exact_sum(a).to_bits());
        assert_eq!(exact_sum_small(&[]), 0.0);
    }

    #[test]
    fn compensated_is_close() {
        let mut c = CompensatedSum::new();
        c.extend([1e16, 1.0, -1e16, 0.5]);
        assert_eq!(c.value(), 1.5);
    }

    #[test]
    fn half_even_tie() {
        // 1 + 2^-53 is exactly halfway between 1 and its successor; the tie
        // goes to the even neighbour (1.0). Adding a tiny positive term must
        // push it up.
        let tie = 2f64.powi(-53);
        assert_eq!(exact_sum([1.0, tie]), 1.0);
        assert_eq!(exact_sum([1.0, tie, 1e-300]), 1.0 + 2f64.powi(-52));
    }
}

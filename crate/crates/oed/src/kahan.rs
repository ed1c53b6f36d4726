//! Compensated summation.
//!
//! Long Monte Carlo and quadrature reductions in this crate accumulate
//! through [`KahanSum`] so that the result does not depend on how the terms
//! were batched, and parallel runs that reduce in a fixed order stay
//! bit-identical to serial ones. The accumulator uses Neumaier's variant of
//! Kahan's algorithm, which stays accurate when a term is larger than the
//! running sum.

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    /// Fresh accumulator at zero.
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one term.
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Current compensated value.
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancellation_naive_sum_loses() {
        // 1 + 1e100 + 1 - 1e100 = 2 exactly; naive summation returns 0.
        let mut acc = KahanSum::new();
        for x in [1.0, 1e100, 1.0, -1e100] {
            acc.add(x);
        }
        assert_eq!(acc.value(), 2.0);
    }

    #[test]
    fn tracks_many_small_terms() {
        let n = 10_000_000u64;
        let mut acc = KahanSum::new();
        for _ in 0..n {
            acc.add(0.1);
        }
        let exact = n as f64 * 0.1;
        assert!((acc.value() - exact).abs() / exact < 1e-15);
    }

    #[test]
    fn from_iterator_matches_manual_loop() {
        let xs = [3.0, -2.5, 1e-9, 7.25];
        let a: KahanSum = xs.iter().copied().collect();
        let mut b = KahanSum::new();
        for x in xs {
            b.add(x);
        }
        assert_eq!(a.value(), b.value());
    }
}

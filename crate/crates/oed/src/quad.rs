//! Nested Clenshaw-Curtis quadrature on [-1, 1].
//!
//! Rules are indexed by a level `l >= 1` with node counts 1, 3, 5, 9, 17,
//! ... (see [`n_nodes`]): the single midpoint at level 1, then
//! `2^(l-1) + 1` extrema of Chebyshev polynomials. Consecutive levels nest,
//! and the implementation guarantees the nesting bit-exactly: node `k` of
//! level `l` is the same f64 as node `2k` of level `l + 1`, because both
//! are produced by `-cos(pi * k / N)` with `N` a power of two, where the
//! integer division is exact in binary floating point. The midpoint is
//! pinned to exactly 0.0 and the negative half is mirrored onto the
//! positive half, so rules are also exactly symmetric.
//!
//! Weights are normalized to the uniform probability measure on [-1, 1]
//! (they sum to one), which is the convention the sparse-grid and
//! polynomial chaos layers expect.

use crate::kahan::KahanSum;

/// A one-dimensional quadrature rule: nodes in ascending order with
/// matching weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule1D {
    /// Apply the rule to a function.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = KahanSum::new();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(x));
        }
        acc.value()
    }
}

/// Number of nodes of the level-`level` rule.
///
/// Levels count from 1. Level 1 has a single node; level `l >= 2` has
/// `2^(l-1) + 1`.
pub fn n_nodes(level: usize) -> usize {
    assert!(level >= 1, "quadrature levels count from 1");
    if level == 1 {
        1
    } else {
        (1 << (level - 1)) + 1
    }
}

/// The Clenshaw-Curtis rule of the given level, with probability weights.
pub fn cc_rule(level: usize) -> QuadRule1D {
    let n = n_nodes(level);
    if n == 1 {
        return QuadRule1D {
            nodes: vec![0.0],
            weights: vec![1.0],
        };
    }

    let big_n = n - 1;
    let mut nodes = vec![0.0f64; n];
    // Fill the strictly negative half, pin the midpoint to zero, mirror.
    // big_n is a power of two, so k / big_n is exact and identical to
    // (2k) / (2 big_n) at the next level, making the nesting bit-exact.
    for k in 0..big_n / 2 {
        nodes[k] = -(std::f64::consts::PI * (k as f64 / big_n as f64)).cos();
    }
    nodes[big_n / 2] = 0.0;
    for k in big_n / 2 + 1..=big_n {
        nodes[k] = -nodes[big_n - k];
    }

    // Exact cosine-series weights for the n-point rule on [-1, 1]:
    //   w_i = (c_i / N) [1 - sum_{j=1}^{N/2} b_j cos(2 j i pi / N) / (4j^2 - 1)]
    // with b_j = 1 for j = N/2 and 2 otherwise, c_i = 1 at the endpoints
    // and 2 inside. Division by two at the end converts to the probability
    // measure. Weights are symmetric, so compute one half and mirror.
    let mut weights = vec![0.0f64; n];
    for i in 0..=big_n / 2 {
        let mut series = KahanSum::new();
        for j in 1..=big_n / 2 {
            let b = if 2 * j == big_n { 1.0 } else { 2.0 };
            let angle = 2.0 * std::f64::consts::PI * (j as f64) * (i as f64) / big_n as f64;
            series.add(b * angle.cos() / ((4 * j * j - 1) as f64));
        }
        let c = if i == 0 { 1.0 } else { 2.0 };
        weights[i] = c / big_n as f64 * (1.0 - series.value()) / 2.0;
    }
    for i in big_n / 2 + 1..=big_n {
        weights[i] = weights[big_n - i];
    }

    QuadRule1D { nodes, weights }
}

/// The difference rule `Delta_l = Q_l - Q_{l-1}` on the level-`level`
/// nodes.
///
/// For `level == 1` this is just `Q_1`. For higher levels the coarse
/// rule's weights are subtracted at the node indices where its nodes
/// reappear in the fine rule (index `2k`, except that the single level-1
/// node lands on the level-2 midpoint).
pub fn difference_rule(level: usize) -> QuadRule1D {
    let fine = cc_rule(level);
    if level == 1 {
        return fine;
    }
    let coarse = cc_rule(level - 1);
    let mut weights = fine.weights.clone();
    for (k, &wc) in coarse.weights.iter().enumerate() {
        let target = if level == 2 { 1 } else { 2 * k };
        weights[target] -= wc;
    }
    QuadRule1D {
        nodes: fine.nodes,
        weights,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn node_counts() {
        assert_eq!(
            (1..=6).map(n_nodes).collect::<Vec<_>>(),
            vec![1, 3, 5, 9, 17, 33]
        );
    }

    #[test]
    fn level_one_is_midpoint() {
        let r = cc_rule(1);
        assert_eq!(r.nodes, vec![0.0]);
        assert_eq!(r.weights, vec![1.0]);
    }

    #[test]
    fn level_two_weights_are_sixths() {
        let r = cc_rule(2);
        assert_eq!(r.nodes, vec![-1.0, 0.0, 1.0]);
        assert_abs_diff_eq!(r.weights[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[1], 4.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[2], 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn weights_sum_to_one() {
        for level in 1..=8 {
            let r = cc_rule(level);
            let total: KahanSum = r.weights.iter().copied().collect();
            assert_abs_diff_eq!(total.value(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn nodes_ascend_and_mirror_bitwise() {
        for level in 2..=8 {
            let r = cc_rule(level);
            let n = r.nodes.len();
            for i in 1..n {
                assert!(r.nodes[i] > r.nodes[i - 1]);
            }
            for i in 0..n {
                if i == n / 2 {
                    assert_eq!(r.nodes[i].to_bits(), 0.0f64.to_bits());
                } else {
                    assert_eq!(r.nodes[i].to_bits(), (-r.nodes[n - 1 - i]).to_bits());
                }
                assert_eq!(r.weights[i].to_bits(), r.weights[n - 1 - i].to_bits());
            }
        }
    }

    #[test]
    fn consecutive_levels_nest_bitwise() {
        for level in 2..=8 {
            let coarse = cc_rule(level - 1);
            let fine = cc_rule(level);
            for (k, &x) in coarse.nodes.iter().enumerate() {
                let target = if level == 2 { 1 } else { 2 * k };
                assert_eq!(
                    x.to_bits(),
                    fine.nodes[target].to_bits(),
                    "level {} node {} does not reappear at level {}",
                    level - 1,
                    k,
                    level
                );
            }
        }
    }

    #[test]
    fn monomials_integrate_exactly_up_to_degree() {
        // An n-point rule is exact for polynomials of degree n - 1; under
        // the probability measure, x^p integrates to 0 for odd p and
        // 1/(p+1) for even p.
        for level in 1..=7 {
            let r = cc_rule(level);
            let n = r.nodes.len();
            for p in 0..n {
                let got = r.integrate(|x| x.powi(p as i32));
                let exact = if p % 2 == 1 { 0.0 } else { 1.0 / (p as f64 + 1.0) };
                assert_abs_diff_eq!(got, exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn difference_weights_sum_to_zero_above_level_one() {
        let d1: KahanSum = difference_rule(1).weights.iter().copied().collect();
        assert_abs_diff_eq!(d1.value(), 1.0, epsilon = 1e-14);
        for level in 2..=8 {
            let d: KahanSum = difference_rule(level).weights.iter().copied().collect();
            assert_abs_diff_eq!(d.value(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn level_two_difference_weights() {
        let d = difference_rule(2);
        assert_abs_diff_eq!(d.weights[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.weights[1], -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.weights[2], 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn telescoping_differences_rebuild_the_rule() {
        // Summing Delta_1..Delta_L at the shared nodes must reproduce Q_L.
        let target = 5;
        let fine = cc_rule(target);
        let mut acc = vec![0.0f64; fine.nodes.len()];
        for level in 1..=target {
            let d = difference_rule(level);
            // Map level-l node k onto level-target index by repeated
            // doubling (with the level-1 node landing on the midpoint).
            for (k, &w) in d.weights.iter().enumerate() {
                let mut idx = if level == 1 { 1usize } else { k };
                let mut at = level.max(2);
                if level == 1 && target >= 2 {
                    at = 2;
                }
                while at < target {
                    idx *= 2;
                    at += 1;
                }
                acc[idx] += w;
            }
        }
        for (a, b) in acc.iter().zip(&fine.weights) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }
}

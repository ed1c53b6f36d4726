//! Dimension-adaptive sparse quadrature on the unit hypercube.
//!
//! Integrals over `[-1, 1]^d` with the uniform probability measure are
//! built from tensor products of the nested Clenshaw-Curtis difference
//! rules in [`crate::quad`]. The sparse approximation is a telescoping
//! sum of difference contributions `Delta_k = (Q_{k_1} - Q_{k_1 - 1})
//! tensor ... tensor (Q_{k_d} - Q_{k_d - 1})` over a downward-closed set
//! of multi-indices `k >= (1, ..., 1)`.
//!
//! [`dasq`] grows that set adaptively: indices live either in the old set
//! `O` or the active set `A`; each step moves the active index with the
//! largest error indicator into `O` and admits its forward neighbors
//! whose backward neighbors are all in `O` (which keeps the set downward
//! closed). The indicator of an index is its contribution relative to the
//! running integral, maximized over outputs; the global indicator `eta`
//! is the sum over the active set, and the refinement stops when `eta`
//! falls below the tolerance or the evaluation budget is spent. The
//! budget is checked between refinements, so it can overshoot by the node
//! count of the last accepted index.
//!
//! Integrand evaluations at shared nodes are cached across indices (the
//! rules nest bit-exactly, so reappearing nodes hit the cache), new nodes
//! are evaluated in parallel, and all accumulation runs in a fixed
//! odometer order with compensated sums, keeping results bit-identical
//! at any thread count.
//!
//! [`IntegrandFamily`] separates the expensive part of an integrand (the
//! base evaluation, e.g. a forward model) from cheap derived outputs
//! (e.g. base values times basis polynomials), so a family of related
//! integrals shares one model evaluation per node; the cache stores only
//! base values.

use crate::error::Error;
use crate::kahan::KahanSum;
use crate::quad::{difference_rule, QuadRule1D};
use crate::Result;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// A family of integrands that share one expensive base evaluation per
/// node.
pub trait IntegrandFamily: Sync {
    /// Input dimension.
    fn dim(&self) -> usize;
    /// Length of the cached base evaluation.
    fn n_base(&self) -> usize;
    /// Number of integrals computed simultaneously.
    fn n_outputs(&self) -> usize;
    /// Expensive evaluation at a node, cached by the driver.
    fn eval_base(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
    /// Expand a base evaluation into all integrand outputs at node `x`;
    /// cheap, never cached.
    fn expand(&self, x: &[f64], base: &[f64], out: &mut [f64]);
}

/// Plain closure integrand: the base evaluation is the output vector.
pub struct FnIntegrand<F> {
    dim: usize,
    n_outputs: usize,
    f: F,
}

impl<F> FnIntegrand<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    pub fn new(dim: usize, n_outputs: usize, f: F) -> Self {
        Self { dim, n_outputs, f }
    }
}

impl<F> IntegrandFamily for FnIntegrand<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_base(&self) -> usize {
        self.n_outputs
    }
    fn n_outputs(&self) -> usize {
        self.n_outputs
    }
    fn eval_base(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out)
    }
    fn expand(&self, _x: &[f64], base: &[f64], out: &mut [f64]) {
        out.copy_from_slice(base);
    }
}

/// Stopping parameters for the adaptive refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DasqConfig {
    /// Stop once the summed active-set indicator falls to or below this.
    pub tol: f64,
    /// Stop once more than this many distinct nodes have been evaluated.
    pub max_evals: usize,
}

impl Default for DasqConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_evals: 10_000 }
    }
}

/// Which set a multi-index ended up in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DasqSet {
    Old,
    Active,
}

/// Final state of one multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct DasqEntry {
    pub index: Vec<u32>,
    pub set: DasqSet,
    /// Error indicator: contribution relative to the integral, maximized
    /// over outputs.
    pub hbar: f64,
}

/// Result of a sparse quadrature run.
#[derive(Debug, Clone, PartialEq)]
pub struct DasqResult {
    pub integrals: Vec<f64>,
    /// Distinct nodes evaluated (equals base evaluations).
    pub n_evals: usize,
    /// Final summed active-set indicator.
    pub eta: f64,
    /// Whether `eta <= tol` was reached within the budget.
    pub converged: bool,
    /// All indices with their final set membership, in lexicographic
    /// order.
    pub entries: Vec<DasqEntry>,
}

impl DasqResult {
    /// Largest one-dimensional level the adaptation reached in any
    /// direction; a fixed reference grid should sit at least two levels
    /// above this for its own error to be subdominant.
    pub fn max_level(&self) -> u32 {
        self.entries
            .iter()
            .flat_map(|e| e.index.iter().copied())
            .max()
            .unwrap_or(1)
    }
}

/// Cache of base evaluations keyed by node coordinates (exact bits; the
/// rules nest bit-exactly so shared nodes collide as intended).
struct NodeCache {
    map: HashMap<Vec<u64>, usize>,
    base: Vec<f64>,
    n_base: usize,
}

impl NodeCache {
    fn new(n_base: usize) -> Self {
        Self { map: HashMap::new(), base: Vec::new(), n_base }
    }

    fn len(&self) -> usize {
        self.map.len()
    }

    fn row(&self, slot: usize) -> &[f64] {
        &self.base[slot * self.n_base..(slot + 1) * self.n_base]
    }
}

fn node_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// All tensor nodes of a difference index, with weights, in odometer
/// order (last dimension fastest).
fn tensor_nodes(rules: &[QuadRule1D]) -> Vec<(Vec<f64>, f64)> {
    let dim = rules.len();
    let total: usize = rules.iter().map(|r| r.nodes.len()).product();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut x = vec![0.0f64; dim];
        let mut w = 1.0f64;
        for k in (0..dim).rev() {
            let n = rules[k].nodes.len();
            let i = rem % n;
            rem /= n;
            x[k] = rules[k].nodes[i];
            w *= rules[k].weights[i];
        }
        out.push((x, w));
    }
    out
}

/// Evaluate one difference contribution, filling the cache as needed.
fn delta_contribution(
    family: &impl IntegrandFamily,
    index: &[u32],
    cache: &mut NodeCache,
) -> Result<Vec<f64>> {
    let rules: Vec<QuadRule1D> = index.iter().map(|&l| difference_rule(l as usize)).collect();
    let nodes = tensor_nodes(&rules);

    // Evaluate unseen nodes in parallel, then commit them to the cache in
    // first-encounter order.
    let mut fresh: Vec<&[f64]> = Vec::new();
    let mut seen = HashMap::new();
    for (x, _) in &nodes {
        let key = node_key(x);
        if !cache.map.contains_key(&key) && !seen.contains_key(&key) {
            seen.insert(key, ());
            fresh.push(x);
        }
    }
    let n_base = family.n_base();
    let mut rows = vec![0.0f64; fresh.len() * n_base];
    let results: Vec<Result<()>> = rows
        .par_chunks_mut(n_base)
        .enumerate()
        .map(|(i, row)| {
            family.eval_base(fresh[i], row)?;
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonfiniteIntegrand { output: c, node: fresh[i].to_vec() });
                }
            }
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    for (i, x) in fresh.iter().enumerate() {
        let slot = cache.len();
        cache.map.insert(node_key(x), slot);
        cache
            .base
            .extend_from_slice(&rows[i * n_base..(i + 1) * n_base]);
    }

    let n_out = family.n_outputs();
    let mut acc: Vec<KahanSum> = vec![KahanSum::new(); n_out];
    let mut expanded = vec![0.0f64; n_out];
    for (x, w) in &nodes {
        let slot = cache.map[&node_key(x)];
        family.expand(x, cache.row(slot), &mut expanded);
        for (a, &v) in acc.iter_mut().zip(&expanded) {
            a.add(*w * v);
        }
    }
    Ok(acc.iter().map(|a| a.value()).collect())
}

/// Forward neighbor `index + e_k` is admissible when every backward
/// neighbor is already in the old set.
fn admissible(candidate: &[u32], old: &BTreeSet<Vec<u32>>) -> bool {
    let mut neighbor = candidate.to_vec();
    for k in 0..candidate.len() {
        if candidate[k] > 1 {
            neighbor[k] -= 1;
            let ok = old.contains(&neighbor);
            neighbor[k] += 1;
            if !ok {
                return false;
            }
        }
    }
    true
}

/// Error indicator of a contribution against the current integrals.
fn indicator(contribution: &[f64], integrals: &[KahanSum]) -> f64 {
    let mut h = 0.0f64;
    for (c, v) in contribution.iter().zip(integrals) {
        h = h.max(c.abs() / v.value().abs().max(1e-30));
    }
    h
}

fn collect_entries(
    old: &BTreeMap<Vec<u32>, f64>,
    active: &BTreeMap<Vec<u32>, f64>,
) -> Vec<DasqEntry> {
    let mut entries: Vec<DasqEntry> = old
        .iter()
        .map(|(i, &h)| DasqEntry { index: i.clone(), set: DasqSet::Old, hbar: h })
        .chain(active.iter().map(|(i, &h)| DasqEntry {
            index: i.clone(),
            set: DasqSet::Active,
            hbar: h,
        }))
        .collect();
    entries.sort_by(|a, b| a.index.cmp(&b.index));
    entries
}

/// Adaptive sparse quadrature of an integrand family over `[-1, 1]^d`.
pub fn dasq(family: &impl IntegrandFamily, config: &DasqConfig) -> Result<DasqResult> {
    let dim = family.dim();
    assert!(dim >= 1, "integrand needs at least one dimension");
    let mut cache = NodeCache::new(family.n_base());
    let mut integrals: Vec<KahanSum> = vec![KahanSum::new(); family.n_outputs()];

    let mut old: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let mut old_keys: BTreeSet<Vec<u32>> = BTreeSet::new();
    let mut active: BTreeMap<Vec<u32>, f64> = BTreeMap::new();

    let root = vec![1u32; dim];
    let contribution = delta_contribution(family, &root, &mut cache)?;
    for (v, c) in integrals.iter_mut().zip(&contribution) {
        v.add(*c);
    }
    active.insert(root, indicator(&contribution, &integrals));

    let eta_of = |active: &BTreeMap<Vec<u32>, f64>| -> f64 {
        let acc: KahanSum = active.values().copied().collect();
        acc.value()
    };
    let mut eta = eta_of(&active);

    while !active.is_empty() && eta > config.tol && cache.len() <= config.max_evals {
        // Largest indicator wins; lexicographically smallest breaks ties.
        let selected = active
            .iter()
            .max_by(|a, b| {
                a.1.partial_cmp(b.1)
                    .unwrap()
                    .then_with(|| b.0.cmp(a.0))
            })
            .map(|(i, _)| i.clone())
            .unwrap();
        let h = active.remove(&selected).unwrap();
        old.insert(selected.clone(), h);
        old_keys.insert(selected.clone());

        for k in 0..dim {
            let mut fwd = selected.clone();
            fwd[k] += 1;
            if !admissible(&fwd, &old_keys) {
                continue;
            }
            let contribution = delta_contribution(family, &fwd, &mut cache)?;
            for (v, c) in integrals.iter_mut().zip(&contribution) {
                v.add(*c);
            }
            active.insert(fwd, indicator(&contribution, &integrals));
        }
        eta = eta_of(&active);
    }

    Ok(DasqResult {
        integrals: integrals.iter().map(|v| v.value()).collect(),
        n_evals: cache.len(),
        eta,
        converged: eta <= config.tol,
        entries: collect_entries(&old, &active),
    })
}

/// Non-adaptive Smolyak quadrature: all indices with `|k|_1 <= level +
/// d - 1` (so `level = 1` is the single midpoint).
pub fn smolyak_fixed(family: &impl IntegrandFamily, level: u32) -> Result<DasqResult> {
    let dim = family.dim();
    assert!(dim >= 1, "integrand needs at least one dimension");
    assert!(level >= 1, "levels count from 1");
    let mut indices: BTreeSet<Vec<u32>> = BTreeSet::new();
    let mut frontier: BTreeSet<Vec<u32>> = BTreeSet::new();
    frontier.insert(vec![1u32; dim]);
    let budget = level as u64 + dim as u64 - 1;
    while let Some(next) = frontier.iter().next().cloned() {
        frontier.remove(&next);
        if indices.contains(&next) {
            continue;
        }
        indices.insert(next.clone());
        for k in 0..dim {
            let mut fwd = next.clone();
            fwd[k] += 1;
            if fwd.iter().map(|&l| l as u64).sum::<u64>() <= budget {
                frontier.insert(fwd);
            }
        }
    }

    let mut cache = NodeCache::new(family.n_base());
    let mut integrals: Vec<KahanSum> = vec![KahanSum::new(); family.n_outputs()];
    let mut old: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for index in &indices {
        let contribution = delta_contribution(family, index, &mut cache)?;
        for (v, c) in integrals.iter_mut().zip(&contribution) {
            v.add(*c);
        }
        old.insert(index.clone(), indicator(&contribution, &integrals));
    }
    Ok(DasqResult {
        integrals: integrals.iter().map(|v| v.value()).collect(),
        n_evals: cache.len(),
        eta: 0.0,
        converged: true,
        entries: collect_entries(&old, &BTreeMap::new()),
    })
}

//! Nested Monte Carlo estimation of expected information gain.
//!
//! The expected information gain of a design `d` is the average, over
//! prior predictive data, of the KL divergence from prior to posterior.
//! Rewriting the divergence through Bayes' rule turns it into a double
//! expectation that needs no posterior normalization:
//!
//! ```text
//! U(d) = E_{theta, y | d} [ ln p(y | theta, d) - ln p(y | d) ]
//! ```
//!
//! The estimator draws `n_out` prior samples `theta_i`, simulates one
//! observation `y_i` from each, and replaces the intractable evidence
//! `p(y_i | d)` by a Monte Carlo average of the likelihood over an inner
//! batch of prior samples:
//!
//! ```text
//! U_hat(d) = (1/n_out) sum_i [ ln p(y_i | theta_i, d) - ln p_hat(y_i | d) ]
//! p_hat(y | d) = (1/n_in) sum_j p(y | theta_j', d)
//! ```
//!
//! Two variants differ in where the inner batch comes from. `reuse` takes
//! the outer batch itself (`theta_j' = theta_j`, forcing `n_in = n_out`),
//! which halves the number of model evaluations and guarantees
//! `p_hat > 0` because the `i`th term contains the query's own
//! likelihood. `resample` draws one fresh inner batch per realization,
//! shared across all outer samples. Both are biased with bias of order
//! `1/n_in`: reuse biases low (the query's own term inflates the
//! evidence), resample biases high (Jensen's inequality on `ln`).
//! [`bias_study`] measures exactly this.
//!
//! All randomness comes from the caller's rng in a frozen draw order
//! (outer parameters, then noise, then the inner batch), so estimates are
//! reproducible; the model evaluations and evidence queries are
//! parallelized over a deterministic index range and reduced in order,
//! so thread count never changes the result.

use crate::error::Error;
use crate::evidence::EvidenceEngine;
use crate::kahan::KahanSum;
use crate::model::{log_likelihood_at, DesignSpace, ForwardModel, NoiseModel, UniformPrior};
use crate::rng::stream;
use crate::Result;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Sample sizes and variant for one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EigConfig {
    /// Outer samples: controls variance.
    pub n_out: usize,
    /// Inner samples: controls bias.
    pub n_in: usize,
    /// Reuse the outer batch as the inner batch.
    pub reuse: bool,
}

impl EigConfig {
    /// Reuse variant with `n` outer and inner samples.
    pub fn reuse(n: usize) -> Self {
        Self { n_out: n, n_in: n, reuse: true }
    }

    /// Resample variant with independent sample counts.
    pub fn resample(n_out: usize, n_in: usize) -> Self {
        Self { n_out, n_in, reuse: false }
    }

    fn validate(&self) -> Result<()> {
        if self.reuse && self.n_out != self.n_in {
            return Err(Error::DimensionMismatch {
                context: "reuse estimator requires n_in == n_out",
                expected: self.n_out,
                got: self.n_in,
            });
        }
        Ok(())
    }
}

/// One estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigEstimate {
    pub eig: f64,
    pub std_err: f64,
    pub n_out: usize,
    pub n_in: usize,
}

/// Evaluate the model over a parameter batch, in parallel, into a
/// row-major matrix; errors are reported for the lowest failing row.
fn eval_batch(
    model: &impl ForwardModel,
    thetas: &[f64],
    design: &[f64],
    n: usize,
) -> Result<Vec<f64>> {
    let n_theta = model.n_theta();
    let n_y = model.n_y();
    let mut out = vec![0.0f64; n * n_y];
    let results: Vec<Result<()>> = out
        .par_chunks_mut(n_y)
        .enumerate()
        .with_min_len(64)
        .map(|(i, row)| {
            model.eval(&thetas[i * n_theta..(i + 1) * n_theta], design, row)?;
            for (c, &g) in row.iter().enumerate() {
                if !g.is_finite() {
                    return Err(Error::NonfiniteIntegrand {
                        output: c,
                        node: thetas[i * n_theta..(i + 1) * n_theta].to_vec(),
                    });
                }
            }
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    Ok(out)
}

/// Estimate the expected information gain of `design`.
pub fn estimate_eig(
    model: &impl ForwardModel,
    prior: &UniformPrior,
    noise: &NoiseModel,
    design: &[f64],
    config: &EigConfig,
    rng: &mut impl Rng,
) -> Result<EigEstimate> {
    config.validate()?;
    assert!(config.n_out >= 2, "need at least two outer samples");
    assert!(config.n_in >= 1, "need at least one inner sample");
    let n_theta = model.n_theta();
    let n_y = model.n_y();
    if prior.dim() != n_theta {
        return Err(Error::DimensionMismatch {
            context: "prior dimension vs model parameters",
            expected: n_theta,
            got: prior.dim(),
        });
    }

    // Frozen draw order: outer parameters, noise, then the inner batch.
    let mut theta_out = vec![0.0f64; config.n_out * n_theta];
    for row in theta_out.chunks_mut(n_theta) {
        prior.sample(rng, row);
    }
    let mut eps = vec![0.0f64; config.n_out * n_y];
    for e in eps.iter_mut() {
        *e = StandardNormal.sample(rng);
    }
    let theta_in = if config.reuse {
        Vec::new()
    } else {
        let mut t = vec![0.0f64; config.n_in * n_theta];
        for row in t.chunks_mut(n_theta) {
            prior.sample(rng, row);
        }
        t
    };

    let g_out = eval_batch(model, &theta_out, design, config.n_out)?;
    let mut ys = vec![0.0f64; config.n_out * n_y];
    for i in 0..config.n_out {
        for c in 0..n_y {
            let g = g_out[i * n_y + c];
            let sigma = noise.sd(c, g)?;
            ys[i * n_y + c] = g + sigma * eps[i * n_y + c];
        }
    }

    let sources = if config.reuse {
        g_out.clone()
    } else {
        eval_batch(model, &theta_in, design, config.n_in)?
    };
    let engine = EvidenceEngine::new(sources, n_y, noise)?;

    let summands: Vec<Result<f64>> = (0..config.n_out)
        .into_par_iter()
        .with_min_len(16)
        .map(|i| {
            let g = &g_out[i * n_y..(i + 1) * n_y];
            let y = &ys[i * n_y..(i + 1) * n_y];
            let ll = log_likelihood_at(noise, g, y)?;
            Ok(ll - engine.log_evidence(y))
        })
        .collect();

    let mut acc = KahanSum::new();
    let mut values = Vec::with_capacity(config.n_out);
    for s in summands {
        let v = s?;
        values.push(v);
        acc.add(v);
    }
    let mean = acc.value() / config.n_out as f64;
    let mut var = KahanSum::new();
    for v in &values {
        var.add((v - mean) * (v - mean));
    }
    let sd = (var.value() / (config.n_out as f64 - 1.0)).sqrt();
    Ok(EigEstimate {
        eig: mean,
        std_err: sd / (config.n_out as f64).sqrt(),
        n_out: config.n_out,
        n_in: config.n_in,
    })
}

/// One evaluated grid node of a design-space scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub design: Vec<f64>,
    pub eig: f64,
    pub std_err: f64,
}

/// The full tensor grid over a design box: `nodes_per_dim[k]` equispaced
/// nodes spanning dimension `k` inclusive of both edges (a single node
/// sits at the midpoint). The last dimension varies fastest.
pub fn grid_nodes(space: &DesignSpace, nodes_per_dim: &[usize]) -> Result<Vec<Vec<f64>>> {
    if nodes_per_dim.len() != space.dim() {
        return Err(Error::DimensionMismatch {
            context: "grid nodes per dimension",
            expected: space.dim(),
            got: nodes_per_dim.len(),
        });
    }
    for (k, &m) in nodes_per_dim.iter().enumerate() {
        if m == 0 {
            return Err(Error::EmptyGrid { index: k, nodes: m });
        }
    }
    let total: usize = nodes_per_dim.iter().product();
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut d = vec![0.0f64; space.dim()];
        for k in (0..space.dim()).rev() {
            let m = nodes_per_dim[k];
            let node = rem % m;
            rem /= m;
            let (lo, hi) = (space.lo()[k], space.hi()[k]);
            d[k] = if m == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * node as f64 / (m - 1) as f64
            };
        }
        out.push(d);
    }
    Ok(out)
}

/// Estimate the information gain on every node of a tensor grid.
///
/// Node `i` uses the rng stream `stream(seed, i)`, so the scan is
/// reproducible and each node's estimate is independent of the others.
pub fn grid_scan(
    model: &impl ForwardModel,
    prior: &UniformPrior,
    noise: &NoiseModel,
    space: &DesignSpace,
    nodes_per_dim: &[usize],
    config: &EigConfig,
    seed: u64,
) -> Result<Vec<ScanPoint>> {
    let nodes = grid_nodes(space, nodes_per_dim)?;
    let results: Vec<Result<ScanPoint>> = nodes
        .into_par_iter()
        .enumerate()
        .map(|(i, design)| {
            let mut rng = stream(seed, i as u64);
            let est = estimate_eig(model, prior, noise, &design, config, &mut rng)?;
            Ok(ScanPoint { design, eig: est.eig, std_err: est.std_err })
        })
        .collect();
    results.into_iter().collect()
}

/// Index of the scan point with the largest estimate (first one on ties).
pub fn argmax(points: &[ScanPoint]) -> usize {
    assert!(!points.is_empty(), "argmax of an empty scan");
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        if p.eig > points[best].eig {
            best = i;
        }
    }
    best
}

/// Protocol for one bias curve: how many inner samples to try and how
/// much total outer sampling to spend per point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasProtocol {
    /// Inner sample counts to measure.
    pub n_ins: Vec<usize>,
    /// Which estimator variant to measure.
    pub reuse: bool,
    /// Total outer samples per point, split across replications.
    pub total_outer: usize,
    /// Outer samples per replication for the resample variant (the reuse
    /// variant is forced to `n_out = n_in`). `None` means one single
    /// replication that spends the whole budget.
    pub n_out: Option<usize>,
}

/// Pooled estimator mean at one inner sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasPoint {
    pub n_in: usize,
    pub reuse: bool,
    pub mean: f64,
    pub std_err: f64,
    pub replications: usize,
}

/// Measure the estimator mean as a function of the inner sample count by
/// averaging independent replications at a fixed total outer budget.
pub fn bias_study(
    model: &impl ForwardModel,
    prior: &UniformPrior,
    noise: &NoiseModel,
    design: &[f64],
    protocol: &BiasProtocol,
    seed: u64,
) -> Result<Vec<BiasPoint>> {
    let mut out = Vec::with_capacity(protocol.n_ins.len());
    for (pi, &n_in) in protocol.n_ins.iter().enumerate() {
        let n_out_rep = if protocol.reuse {
            n_in
        } else {
            protocol.n_out.unwrap_or(protocol.total_outer)
        };
        let reps = (protocol.total_outer / n_out_rep).max(1);
        let config = if protocol.reuse {
            EigConfig::reuse(n_in)
        } else {
            EigConfig::resample(n_out_rep, n_in)
        };
        let estimates: Vec<Result<EigEstimate>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, ((pi as u64) << 32) | r as u64);
                estimate_eig(model, prior, noise, design, &config, &mut rng)
            })
            .collect();
        let mut acc = KahanSum::new();
        let mut vals = Vec::with_capacity(reps);
        let mut single_se = 0.0;
        for e in estimates {
            let e = e?;
            vals.push(e.eig);
            acc.add(e.eig);
            single_se = e.std_err;
        }
        let mean = acc.value() / reps as f64;
        let std_err = if reps >= 2 {
            let mut var = KahanSum::new();
            for v in &vals {
                var.add((v - mean) * (v - mean));
            }
            (var.value() / (reps as f64 - 1.0)).sqrt() / (reps as f64).sqrt()
        } else {
            single_se
        };
        out.push(BiasPoint {
            n_in,
            reuse: protocol.reuse,
            mean,
            std_err,
            replications: reps,
        });
    }
    Ok(out)
}

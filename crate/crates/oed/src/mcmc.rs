//! Posterior sampling for post-experiment inference.
//!
//! The sampler is Gaussian random-walk Metropolis-Hastings with two
//! standard upgrades, together known as DRAM:
//!
//! * delayed rejection: when the first-stage proposal is rejected, one
//!   more proposal is drawn from a narrower kernel, and accepted with
//!   the ratio that keeps the combined transition reversible;
//! * adaptive Metropolis: the proposal covariance is recomputed from the
//!   full chain history at a fixed interval, scaled by `2.4^2 / n` and
//!   regularized by `eps * I`. Recomputing from the full history makes
//!   the adaptation diminishing, which preserves ergodicity.
//!
//! A chain is strictly sequential; run several chains on distinct seeds
//! for parallelism. [`chain_stats`] summarizes a chain with moments,
//! acceptance rates and an autocorrelation-based effective sample size,
//! and [`posterior_grid`] rasterizes a two-parameter posterior for
//! contour plots.

use crate::error::Error;
use crate::kahan::KahanSum;
use crate::model::{ForwardModel, NoiseModel, UniformPrior};
use crate::Result;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Tuning constants for [`dram_run`].
#[derive(Debug, Clone)]
pub struct DramConfig {
    /// Initial proposal covariance, row-major `n x n`.
    pub initial_cov: Vec<f64>,
    /// Chain length after which adaptation begins.
    pub am_start: usize,
    /// Steps between covariance recomputations once adaptation began.
    pub am_interval: usize,
    /// Diagonal regularization added to the empirical covariance.
    pub am_eps: f64,
    /// Second-stage covariance factor, strictly inside (0, 1).
    pub dr_scale: f64,
    /// Steps discarded by consumers; `None` means the first 20%.
    pub burn_in: Option<usize>,
    /// Keep every `thin`-th retained sample.
    pub thin: usize,
}

impl DramConfig {
    /// Standard constants around a given initial covariance.
    pub fn new(initial_cov: Vec<f64>) -> Self {
        Self {
            initial_cov,
            am_start: 1000,
            am_interval: 100,
            am_eps: 1e-8,
            dr_scale: 0.2,
            burn_in: None,
            thin: 1,
        }
    }

    /// Diagonal initial covariance from per-parameter variances.
    pub fn diagonal(variances: &[f64]) -> Self {
        let n = variances.len();
        let mut cov = vec![0.0; n * n];
        for (i, &v) in variances.iter().enumerate() {
            cov[i * n + i] = v;
        }
        Self::new(cov)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.initial_cov.len() != n * n {
            return Err(Error::DimensionMismatch {
                context: "initial proposal covariance",
                expected: n * n,
                got: self.initial_cov.len(),
            });
        }
        if !(self.dr_scale > 0.0 && self.dr_scale < 1.0) {
            return Err(Error::InvalidBounds { index: 0, lo: 0.0, hi: self.dr_scale });
        }
        if self.am_interval == 0 || self.thin == 0 {
            return Err(Error::EmptyGrid { index: 0, nodes: 0 });
        }
        Ok(())
    }

    /// The burn-in count for a chain of `n_steps` samples.
    pub fn burn_in_for(&self, n_steps: usize) -> usize {
        self.burn_in.unwrap_or(n_steps / 5)
    }
}

/// One realized chain. Rejected rounds repeat the current state, so the
/// rows form the Markov chain itself, not the accepted subsequence.
#[derive(Debug, Clone)]
pub struct Chain {
    pub n_theta: usize,
    /// Row-major `n_steps x n_theta`.
    pub samples: Vec<f64>,
    /// Log-posterior of each stored row; always finite.
    pub logpost: Vec<f64>,
    /// Per row: 1 for a first-stage acceptance, 2 for a delayed-rejection
    /// acceptance, 0 for a round that kept the previous state.
    pub stage_accepted: Vec<u8>,
    pub n_stage1_accepts: usize,
    pub n_stage2_accepts: usize,
}

impl Chain {
    pub fn n_steps(&self) -> usize {
        self.logpost.len()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.n_theta..(i + 1) * self.n_theta]
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.n_steps() == 0 {
            return 0.0;
        }
        (self.n_stage1_accepts + self.n_stage2_accepts) as f64 / self.n_steps() as f64
    }
}

/// Lower Cholesky factor of a row-major symmetric matrix, or `None` if a
/// pivot fails.
fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// `||L^{-1} v||^2` by forward substitution.
fn mahalanobis_sq(n: usize, l: &[f64], v: &[f64], scratch: &mut [f64]) -> f64 {
    for i in 0..n {
        let mut s = v[i];
        for k in 0..i {
            s -= l[i * n + k] * scratch[k];
        }
        scratch[i] = s / l[i * n + i];
    }
    scratch.iter().map(|y| y * y).sum()
}

/// Log acceptance probability of the delayed-rejection stage.
///
/// Arguments are the log-posteriors of the current state, the rejected
/// first proposal and the second proposal, plus the log-densities of the
/// first-stage kernel for the moves `y2 -> y1` and `x -> y1` (any common
/// additive constant cancels). The second-stage kernel must be symmetric
/// in its endpoints, which a Gaussian random walk is.
pub fn dr_log_accept_stage2(
    lp_x: f64,
    lp_y1: f64,
    lp_y2: f64,
    lq1_y2_to_y1: f64,
    lq1_x_to_y1: f64,
) -> f64 {
    if lp_y2 == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let la1_rev = (lp_y1 - lp_y2).min(0.0);
    if la1_rev == 0.0 {
        // The reverse path would have accepted y1 at stage one, so the
        // forward move has zero probability under reversibility.
        return f64::NEG_INFINITY;
    }
    let la1_fwd = (lp_y1 - lp_x).min(0.0);
    let num = lp_y2 + lq1_y2_to_y1 + (-la1_rev.exp()).ln_1p();
    let den = lp_x + lq1_x_to_y1 + (-la1_fwd.exp()).ln_1p();
    (num - den).min(0.0)
}

/// Full-history running moments for the adaptive proposal.
struct Welford {
    n: usize,
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    delta: Vec<f64>,
}

impl Welford {
    fn new(n: usize) -> Self {
        Self { n, count: 0, mean: vec![0.0; n], m2: vec![0.0; n * n], delta: vec![0.0; n] }
    }

    fn update(&mut self, x: &[f64]) {
        self.count += 1;
        for i in 0..self.n {
            self.delta[i] = x[i] - self.mean[i];
            self.mean[i] += self.delta[i] / self.count as f64;
        }
        for i in 0..self.n {
            let post = x[i] - self.mean[i];
            for j in 0..self.n {
                self.m2[i * self.n + j] += self.delta[j] * post;
            }
        }
    }

    /// `s_d (history covariance + eps I)`.
    fn proposal_cov(&self, s_d: f64, eps: f64, out: &mut [f64]) {
        let denom = (self.count - 1).max(1) as f64;
        for i in 0..self.n {
            for j in 0..self.n {
                let c = 0.5 * (self.m2[i * self.n + j] + self.m2[j * self.n + i]) / denom;
                out[i * self.n + j] = s_d * (c + if i == j { eps } else { 0.0 });
            }
        }
    }
}

/// Run one DRAM chain of `n_steps` rounds from `x0`.
///
/// Proposals whose log-posterior is NaN count as rejected and are never
/// stored. The draw order per round is fixed: the first-stage step
/// vector, its acceptance uniform, then (only on rejection) the
/// second-stage step vector and its uniform.
pub fn dram_run(
    log_posterior: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    config: &DramConfig,
    n_steps: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Chain> {
    let n = x0.len();
    config.validate(n)?;
    let lp = |x: &[f64]| {
        let v = log_posterior(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut lp_x = lp(x0);
    if !lp_x.is_finite() {
        return Err(Error::ChainInit { logpost: lp_x });
    }
    let mut chol = cholesky(n, &config.initial_cov)
        .ok_or(Error::ZeroDenominator { context: "initial proposal covariance Cholesky" })?;

    let s_d = 2.4 * 2.4 / n as f64;
    let dr_step = config.dr_scale.sqrt();
    let mut welford = Welford::new(n);
    welford.update(x0);

    let mut chain = Chain {
        n_theta: n,
        samples: Vec::with_capacity(n_steps * n),
        logpost: Vec::with_capacity(n_steps),
        stage_accepted: Vec::with_capacity(n_steps),
        n_stage1_accepts: 0,
        n_stage2_accepts: 0,
    };

    let mut x = x0.to_vec();
    let mut y1 = vec![0.0f64; n];
    let mut y2 = vec![0.0f64; n];
    let mut z = vec![0.0f64; n];
    let mut diff = vec![0.0f64; n];
    let mut scratch = vec![0.0f64; n];
    let mut cov = vec![0.0f64; n * n];

    let propose = |from: &[f64], scale: f64, to: &mut [f64], l: &[f64], rng: &mut ChaCha12Rng, z: &mut [f64]| {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..=i {
                s += l[i * n + k] * z[k];
            }
            to[i] = from[i] + scale * s;
        }
    };

    for _ in 0..n_steps {
        propose(&x, 1.0, &mut y1, &chol, rng, &mut z);
        let lp_y1 = lp(&y1);
        let la1 = (lp_y1 - lp_x).min(0.0);
        let u1: f64 = rng.random();
        let mut stage = 0u8;
        if u1.ln() < la1 {
            x.copy_from_slice(&y1);
            lp_x = lp_y1;
            stage = 1;
            chain.n_stage1_accepts += 1;
        } else {
            propose(&x, dr_step, &mut y2, &chol, rng, &mut z);
            let lp_y2 = lp(&y2);
            for i in 0..n {
                diff[i] = y1[i] - y2[i];
            }
            let lq1_rev = -0.5 * mahalanobis_sq(n, &chol, &diff, &mut scratch);
            for i in 0..n {
                diff[i] = y1[i] - x[i];
            }
            let lq1_fwd = -0.5 * mahalanobis_sq(n, &chol, &diff, &mut scratch);
            let la2 = dr_log_accept_stage2(lp_x, lp_y1, lp_y2, lq1_rev, lq1_fwd);
            let u2: f64 = rng.random();
            if u2.ln() < la2 {
                x.copy_from_slice(&y2);
                lp_x = lp_y2;
                stage = 2;
                chain.n_stage2_accepts += 1;
            }
        }

        chain.samples.extend_from_slice(&x);
        chain.logpost.push(lp_x);
        chain.stage_accepted.push(stage);
        welford.update(&x);

        let t = welford.count;
        if t >= config.am_start && (t - config.am_start) % config.am_interval == 0 {
            welford.proposal_cov(s_d, config.am_eps, &mut cov);
            chol = cholesky(n, &cov)
                .ok_or(Error::ZeroDenominator { context: "adapted covariance Cholesky" })?;
        }
    }
    Ok(chain)
}

/// Log-posterior of a box-uniform prior and Gaussian observation noise
/// around the model prediction at a fixed design.
pub fn model_log_posterior<'a, M: ForwardModel>(
    model: &'a M,
    prior: &'a UniformPrior,
    noise: &'a NoiseModel,
    design: &'a [f64],
    y: &'a [f64],
) -> impl Fn(&[f64]) -> f64 + 'a {
    move |theta: &[f64]| {
        let lp0 = prior.log_density(theta);
        if lp0 == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let mut scratch = Vec::with_capacity(model.n_y());
        match crate::model::log_likelihood(model, noise, theta, design, y, &mut scratch) {
            Ok(ll) => ll + lp0,
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Moments, acceptance rates and effective sample sizes of a chain after
/// burn-in and thinning.
#[derive(Debug, Clone)]
pub struct ChainStats {
    pub mean: Vec<f64>,
    /// Row-major `n x n` sample covariance of the retained samples.
    pub cov: Vec<f64>,
    pub accept_rate: f64,
    pub stage1_rate: f64,
    pub stage2_rate: f64,
    /// Per-parameter effective sample size of the retained samples.
    pub ess: Vec<f64>,
    pub retained: usize,
}

/// Effective sample size by the initial-positive-sequence truncation of
/// the autocovariance.
fn ess_geyer(v: &[f64], mean: f64) -> f64 {
    let m = v.len();
    if m < 2 {
        return m.min(1) as f64;
    }
    let gamma = |k: usize| -> f64 {
        let mut s = KahanSum::new();
        for t in 0..m - k {
            s.add((v[t] - mean) * (v[t + k] - mean));
        }
        s.value() / m as f64
    };
    let g0 = gamma(0);
    if !(g0 > 0.0) {
        return 1.0;
    }
    let mut tau = -1.0;
    let mut j = 0;
    loop {
        let a = gamma(2 * j);
        let b = if 2 * j + 1 < m { gamma(2 * j + 1) } else { 0.0 };
        let pair = a + b;
        if pair <= 0.0 || 2 * j + 1 >= m {
            break;
        }
        tau += 2.0 * pair / g0;
        j += 1;
    }
    m as f64 / tau.max(1e-12)
}

pub fn chain_stats(chain: &Chain, burn_in: usize, thin: usize) -> Result<ChainStats> {
    let n = chain.n_theta;
    let total = chain.n_steps();
    let kept: Vec<usize> = (burn_in..total).step_by(thin.max(1)).collect();
    if kept.is_empty() {
        return Err(Error::EmptyChain { retained: 0 });
    }
    let m = kept.len();
    let mut mean = vec![0.0f64; n];
    for i in 0..n {
        let s: KahanSum = kept.iter().map(|&t| chain.samples[t * n + i]).collect();
        mean[i] = s.value() / m as f64;
    }
    let mut cov = vec![0.0f64; n * n];
    if m > 1 {
        for i in 0..n {
            for j in 0..=i {
                let mut s = KahanSum::new();
                for &t in &kept {
                    s.add(
                        (chain.samples[t * n + i] - mean[i])
                            * (chain.samples[t * n + j] - mean[j]),
                    );
                }
                let c = s.value() / (m - 1) as f64;
                cov[i * n + j] = c;
                cov[j * n + i] = c;
            }
        }
    }
    let mut ess = Vec::with_capacity(n);
    for i in 0..n {
        let series: Vec<f64> = kept.iter().map(|&t| chain.samples[t * n + i]).collect();
        ess.push(ess_geyer(&series, mean[i]));
    }
    Ok(ChainStats {
        mean,
        cov,
        accept_rate: chain.acceptance_rate(),
        stage1_rate: chain.n_stage1_accepts as f64 / total.max(1) as f64,
        stage2_rate: chain.n_stage2_accepts as f64 / total.max(1) as f64,
        ess,
        retained: m,
    })
}

/// A normalized two-parameter density on a tensor grid, for contours.
#[derive(Debug, Clone)]
pub struct PosteriorGrid {
    /// Grid nodes along each of the two axes.
    pub axes: [Vec<f64>; 2],
    /// Row-major `resolution x resolution`, first axis major; integrates
    /// to 1 under the trapezoid rule.
    pub density: Vec<f64>,
}

impl PosteriorGrid {
    pub fn resolution(&self) -> usize {
        self.axes[0].len()
    }

    fn trapezoid_weight(nodes: &[f64], i: usize) -> f64 {
        let h = (nodes[nodes.len() - 1] - nodes[0]) / (nodes.len() - 1) as f64;
        if i == 0 || i == nodes.len() - 1 {
            0.5 * h
        } else {
            h
        }
    }

    /// Differential entropy of the gridded density, in nats.
    pub fn entropy(&self) -> f64 {
        let r = self.resolution();
        let mut s = KahanSum::new();
        for i in 0..r {
            let wi = Self::trapezoid_weight(&self.axes[0], i);
            for j in 0..r {
                let wj = Self::trapezoid_weight(&self.axes[1], j);
                let p = self.density[i * r + j];
                if p > 0.0 {
                    s.add(-wi * wj * p * p.ln());
                }
            }
        }
        s.value()
    }
}

/// Evaluate a two-parameter log-posterior on an equispaced grid,
/// exponentiate around the maximum and normalize by the trapezoid rule.
pub fn posterior_grid(
    log_posterior: impl Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
) -> Result<PosteriorGrid> {
    if lo.len() != 2 || hi.len() != 2 {
        return Err(Error::DimensionMismatch {
            context: "posterior grid bounds",
            expected: 2,
            got: lo.len().max(hi.len()),
        });
    }
    if resolution < 2 {
        return Err(Error::EmptyGrid { index: 0, nodes: resolution });
    }
    for k in 0..2 {
        if !(lo[k].is_finite() && hi[k].is_finite() && lo[k] < hi[k]) {
            return Err(Error::InvalidBounds { index: k, lo: lo[k], hi: hi[k] });
        }
    }
    let axis = |k: usize| -> Vec<f64> {
        (0..resolution)
            .map(|i| lo[k] + (hi[k] - lo[k]) * i as f64 / (resolution - 1) as f64)
            .collect()
    };
    let axes = [axis(0), axis(1)];
    let mut logs = vec![f64::NEG_INFINITY; resolution * resolution];
    let mut max = f64::NEG_INFINITY;
    for i in 0..resolution {
        for j in 0..resolution {
            let v = log_posterior(&[axes[0][i], axes[1][j]]);
            let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
            logs[i * resolution + j] = v;
            if v > max {
                max = v;
            }
        }
    }
    if !max.is_finite() {
        return Err(Error::AllMinusInfinity { context: "posterior" });
    }
    let mut density: Vec<f64> = logs.iter().map(|&v| (v - max).exp()).collect();
    let mut z = KahanSum::new();
    for i in 0..resolution {
        let wi = PosteriorGrid::trapezoid_weight(&axes[0], i);
        for j in 0..resolution {
            let wj = PosteriorGrid::trapezoid_weight(&axes[1], j);
            z.add(wi * wj * density[i * resolution + j]);
        }
    }
    let z = z.value();
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::ZeroDenominator { context: "posterior grid normalization" });
    }
    for d in density.iter_mut() {
        *d /= z;
    }
    Ok(PosteriorGrid { axes, density })
}

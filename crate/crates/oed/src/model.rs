//! Forward models, priors, noise, and the Gaussian likelihood.
//!
//! An experiment is described by a [`ForwardModel`] `G(theta, d)` mapping
//! parameters and a design to predicted observables, a [`UniformPrior`] on
//! the parameters, and a [`NoiseModel`] giving the standard deviation of
//! the additive Gaussian measurement error per observable. Observed data
//! are `y = G(theta, d) + eps` with independent `eps_c ~ N(0, sigma_c^2)`.
//!
//! [`SimpleModel`] is the closed-form scalar exemplar used throughout the
//! tests and examples: cheap enough to estimate its expected information
//! gain essentially exactly, yet with a design landscape that has distinct
//! local and global optima. [`BatchModel`] stacks several independent
//! experiments of one underlying model into a single joint design, which
//! is how multi-experiment information gain is expressed.

use crate::error::Error;
use crate::Result;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A deterministic map from parameters and design to observables.
///
/// Implementations must be cheap to share across threads; all bulk
/// evaluation in this crate goes through `&self` from parallel workers.
pub trait ForwardModel: Sync {
    /// Number of model parameters.
    fn n_theta(&self) -> usize;
    /// Number of design variables.
    fn n_design(&self) -> usize;
    /// Number of observables.
    fn n_y(&self) -> usize;

    /// Evaluate the model, writing the observables into `out`.
    fn eval(&self, theta: &[f64], design: &[f64], out: &mut [f64]) -> Result<()>;

    /// Check argument lengths; implementations call this at the top of
    /// [`ForwardModel::eval`].
    fn check_shapes(&self, theta: &[f64], design: &[f64], out: &[f64]) -> Result<()> {
        if theta.len() != self.n_theta() {
            return Err(Error::DimensionMismatch {
                context: "forward model parameters",
                expected: self.n_theta(),
                got: theta.len(),
            });
        }
        if design.len() != self.n_design() {
            return Err(Error::DimensionMismatch {
                context: "forward model design",
                expected: self.n_design(),
                got: design.len(),
            });
        }
        if out.len() != self.n_y() {
            return Err(Error::DimensionMismatch {
                context: "forward model output buffer",
                expected: self.n_y(),
                got: out.len(),
            });
        }
        Ok(())
    }
}

impl<M: ForwardModel + ?Sized> ForwardModel for &M {
    fn n_theta(&self) -> usize {
        (**self).n_theta()
    }
    fn n_design(&self) -> usize {
        (**self).n_design()
    }
    fn n_y(&self) -> usize {
        (**self).n_y()
    }
    fn eval(&self, theta: &[f64], design: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).eval(theta, design, out)
    }
}

/// Axis-aligned box of admissible designs.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DesignSpace {
    /// Build a box from per-dimension bounds; every interval must be
    /// finite and non-degenerate.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                context: "design space bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::InvalidBounds { index: i, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    /// The unit box [0, 1]^dim.
    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, d: &[f64]) -> bool {
        d.len() == self.dim()
            && d.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&l, &h))| x >= l && x <= h)
    }

    /// Project a point onto the box, coordinate by coordinate.
    pub fn clamp(&self, d: &mut [f64]) {
        for (x, (&l, &h)) in d.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *x = x.clamp(l, h);
        }
    }

    /// Draw a uniform point in the box.
    pub fn sample(&self, rng: &mut impl Rng, out: &mut [f64]) {
        for (x, (&l, &h)) in out.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *x = l + (h - l) * rng.random::<f64>();
        }
    }
}

/// Standard deviation of the additive Gaussian noise on each observable:
/// `sigma(g) = rel * |g| + abs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub rel: f64,
    pub abs: f64,
}

impl NoiseModel {
    /// Constant noise level, independent of the signal.
    pub fn constant(sigma: f64) -> Self {
        Self { rel: 0.0, abs: sigma }
    }

    /// True when the noise level does not depend on the signal value.
    pub fn is_constant(&self) -> bool {
        self.rel == 0.0
    }

    /// Noise standard deviation for observable `index` at signal value
    /// `g`; positive or an error.
    pub fn sd(&self, index: usize, g: f64) -> Result<f64> {
        let sigma = self.rel * g.abs() + self.abs;
        if sigma.is_finite() && sigma > 0.0 {
            Ok(sigma)
        } else {
            Err(Error::NonpositiveNoise { index, sigma })
        }
    }
}

/// Independent uniform prior on each parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPrior {
    lo: Vec<f64>,
    hi: Vec<f64>,
    log_volume: f64,
}

impl UniformPrior {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                context: "prior bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        let mut log_volume = 0.0;
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::InvalidBounds { index: i, lo: l, hi: h });
            }
            log_volume += (h - l).ln();
        }
        Ok(Self { lo, hi, log_volume })
    }

    /// The unit cube [0, 1]^dim.
    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
            log_volume: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Draw one sample into `out`.
    pub fn sample(&self, rng: &mut impl Rng, out: &mut [f64]) {
        for (x, (&l, &h)) in out.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *x = l + (h - l) * rng.random::<f64>();
        }
    }

    /// Log density: constant inside the box, negative infinity outside.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let inside = theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&l, &h))| x >= l && x <= h);
        if inside {
            -self.log_volume
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// The scalar benchmark model `G(theta, d) = theta^3 d^2 +
/// theta exp(-|0.2 - d|)` on `theta, d` in [0, 1].
///
/// Its information gain landscape over `d` has a local maximum near
/// `d = 0.2` (where the exponential term peaks) and the global maximum at
/// `d = 1` (where the cubic term dominates), making it a compact test bed
/// for optimizers that must not settle for the nearest mode.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleModel;

impl ForwardModel for SimpleModel {
    fn n_theta(&self) -> usize {
        1
    }
    fn n_design(&self) -> usize {
        1
    }
    fn n_y(&self) -> usize {
        1
    }

    fn eval(&self, theta: &[f64], design: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_shapes(theta, design, out)?;
        let t = theta[0];
        let d = design[0];
        out[0] = t * t * t * d * d + t * (-(0.2 - d).abs()).exp();
        Ok(())
    }
}

/// A batch of `n_batch` independent experiments of the same underlying
/// model, exposed as one joint model.
///
/// The joint design is the concatenation of the per-experiment designs and
/// the joint observable vector is the concatenation of the per-experiment
/// observables, both in experiment order.
#[derive(Debug, Clone)]
pub struct BatchModel<M> {
    inner: M,
    n_batch: usize,
}

impl<M: ForwardModel> BatchModel<M> {
    pub fn new(inner: M, n_batch: usize) -> Self {
        assert!(n_batch >= 1, "a batch needs at least one experiment");
        Self { inner, n_batch }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn n_batch(&self) -> usize {
        self.n_batch
    }
}

impl<M: ForwardModel> ForwardModel for BatchModel<M> {
    fn n_theta(&self) -> usize {
        self.inner.n_theta()
    }
    fn n_design(&self) -> usize {
        self.inner.n_design() * self.n_batch
    }
    fn n_y(&self) -> usize {
        self.inner.n_y() * self.n_batch
    }

    fn eval(&self, theta: &[f64], design: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_shapes(theta, design, out)?;
        let nd = self.inner.n_design();
        let ny = self.inner.n_y();
        for b in 0..self.n_batch {
            self.inner
                .eval(theta, &design[b * nd..(b + 1) * nd], &mut out[b * ny..(b + 1) * ny])?;
        }
        Ok(())
    }
}

/// Log likelihood `ln p(y | theta, d)` for the Gaussian noise model, with
/// the model prediction already evaluated into `g`.
pub fn log_likelihood_at(noise: &NoiseModel, g: &[f64], y: &[f64]) -> Result<f64> {
    if g.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "likelihood observables",
            expected: g.len(),
            got: y.len(),
        });
    }
    const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;
    let mut lp = 0.0;
    for (c, (&gc, &yc)) in g.iter().zip(y).enumerate() {
        let sigma = noise.sd(c, gc)?;
        let r = (yc - gc) / sigma;
        lp += -sigma.ln() - HALF_LN_TWO_PI - 0.5 * r * r;
    }
    Ok(lp)
}

/// Log likelihood `ln p(y | theta, d)`, evaluating the model internally.
pub fn log_likelihood(
    model: &impl ForwardModel,
    noise: &NoiseModel,
    theta: &[f64],
    design: &[f64],
    y: &[f64],
    scratch: &mut Vec<f64>,
) -> Result<f64> {
    scratch.resize(model.n_y(), 0.0);
    model.eval(theta, design, scratch)?;
    log_likelihood_at(noise, scratch, y)
}

/// Draw one synthetic observation `y = G(theta, d) + eps` into `out`.
pub fn sample_observation(
    model: &impl ForwardModel,
    noise: &NoiseModel,
    theta: &[f64],
    design: &[f64],
    rng: &mut impl Rng,
    out: &mut [f64],
) -> Result<()> {
    model.eval(theta, design, out)?;
    for (c, yc) in out.iter_mut().enumerate() {
        let sigma = noise.sd(c, *yc)?;
        let z: f64 = StandardNormal.sample(rng);
        *yc += sigma * z;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simple_model_known_values() {
        let m = SimpleModel;
        let mut out = [0.0];
        m.eval(&[1.0], &[1.0], &mut out).unwrap();
        assert_abs_diff_eq!(out[0], 1.449_328_964_117_221_6, epsilon = 1e-15);
        m.eval(&[0.4373], &[0.2], &mut out).unwrap();
        assert_abs_diff_eq!(out[0], 0.440_645_017_724_680_0, epsilon = 1e-15);
        m.eval(&[0.5], &[0.7], &mut out).unwrap();
        assert_abs_diff_eq!(out[0], 0.364_515_329_856_316_7, epsilon = 1e-15);
    }

    #[test]
    fn simple_model_rejects_wrong_shapes() {
        let m = SimpleModel;
        let mut out = [0.0];
        assert!(m.eval(&[1.0, 2.0], &[1.0], &mut out).is_err());
        assert!(m.eval(&[1.0], &[], &mut out).is_err());
        assert!(m.eval(&[1.0], &[1.0], &mut []).is_err());
    }

    #[test]
    fn batch_model_stacks_in_experiment_order() {
        let m = BatchModel::new(SimpleModel, 3);
        assert_eq!(m.n_design(), 3);
        assert_eq!(m.n_y(), 3);
        let theta = [0.7];
        let designs = [0.1, 0.5, 0.9];
        let mut joint = [0.0; 3];
        m.eval(&theta, &designs, &mut joint).unwrap();
        for (b, &d) in designs.iter().enumerate() {
            let mut single = [0.0];
            SimpleModel.eval(&theta, &[d], &mut single).unwrap();
            assert_eq!(joint[b], single[0]);
        }
    }

    #[test]
    fn noise_model_sd_and_errors() {
        let n = NoiseModel::constant(0.01);
        assert!(n.is_constant());
        assert_eq!(n.sd(0, 123.0).unwrap(), 0.01);
        let r = NoiseModel { rel: 0.1, abs: 0.001 };
        assert_abs_diff_eq!(r.sd(2, -3.0).unwrap(), 0.301, epsilon = 1e-15);
        assert!(NoiseModel::constant(0.0).sd(0, 1.0).is_err());
        assert!(NoiseModel::constant(-1.0).sd(0, 1.0).is_err());
    }

    #[test]
    fn likelihood_matches_gaussian_formula() {
        let noise = NoiseModel::constant(0.01);
        // At zero residual: -ln sigma - ln sqrt(2 pi).
        let lp = log_likelihood_at(&noise, &[0.5], &[0.5]).unwrap();
        assert_abs_diff_eq!(lp, 3.686_231_652_783_418, epsilon = 1e-12);
        // One-sigma residual subtracts exactly one half.
        let lp1 = log_likelihood_at(&noise, &[0.5], &[0.51]).unwrap();
        assert_abs_diff_eq!(lp - lp1, 0.5, epsilon = 1e-12);
        // Two observables add their contributions.
        let lp2 = log_likelihood_at(&noise, &[0.5, 0.5], &[0.5, 0.51]).unwrap();
        assert_abs_diff_eq!(lp2, lp + lp1, epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_evaluates_the_model() {
        let noise = NoiseModel::constant(0.01);
        let mut scratch = Vec::new();
        let theta = [0.4373];
        let y = [0.45];
        let lp =
            log_likelihood(&SimpleModel, &noise, &theta, &[0.2], &y, &mut scratch).unwrap();
        let mut g = [0.0];
        SimpleModel.eval(&theta, &[0.2], &mut g).unwrap();
        let direct = log_likelihood_at(&noise, &g, &y).unwrap();
        assert_eq!(lp, direct);
    }

    #[test]
    fn prior_density_and_sampling() {
        let p = UniformPrior::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        // Volume 4, so log density is -ln 4 inside.
        assert_abs_diff_eq!(p.log_density(&[1.0, 0.0]), -(4.0f64).ln(), epsilon = 1e-15);
        assert_eq!(p.log_density(&[3.0, 0.0]), f64::NEG_INFINITY);
        assert_eq!(p.log_density(&[1.0]), f64::NEG_INFINITY);
        let mut rng = stream(7, 0);
        let mut x = [0.0; 2];
        for _ in 0..100 {
            p.sample(&mut rng, &mut x);
            assert!(p.log_density(&x).is_finite());
        }
    }

    #[test]
    fn observation_noise_has_the_right_scale() {
        let noise = NoiseModel::constant(0.01);
        let theta = [0.4373];
        let mut g = [0.0];
        SimpleModel.eval(&theta, &[0.2], &mut g).unwrap();
        let mut rng = stream(11, 0);
        let n = 20_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        let mut y = [0.0];
        for _ in 0..n {
            sample_observation(&SimpleModel, &noise, &theta, &[0.2], &mut rng, &mut y).unwrap();
            let r = y[0] - g[0];
            sum += r;
            sum2 += r * r;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 3e-4);
        assert_abs_diff_eq!(var.sqrt(), 0.01, epsilon = 3e-4);
    }

    #[test]
    fn design_space_validation_and_clamp() {
        assert!(DesignSpace::new(vec![0.0], vec![0.0]).is_err());
        assert!(DesignSpace::new(vec![0.0], vec![f64::INFINITY]).is_err());
        let b = DesignSpace::new(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        assert!(b.contains(&[0.5, 2.0]));
        assert!(!b.contains(&[0.5, 0.5]));
        let mut d = [1.5, 0.0];
        b.clamp(&mut d);
        assert_eq!(d, [1.0, 1.0]);
    }
}

//! Variable-order, variable-step BDF integrator for stiff systems.
//!
//! The solver state is a Nordsieck array: column j holds the scaled
//! derivative h^j y^(j) / j! of the interpolating polynomial, so
//! prediction is a Pascal-triangle shift, a step-size change is an
//! exact diagonal rescaling, and the corrector adds l_j * delta to
//! column j, where delta is the Newton correction of y and the l_j are
//! the coefficients of the generating polynomial of the order-q
//! backward differentiation formula. Each step solves the implicit
//! equation with a modified Newton iteration whose finite-difference
//! Jacobian is reused across steps until it stops converging, the
//! local error estimate is the scaled corrector difference, and order
//! moves up or down when a neighboring order's error proxy promises a
//! larger step.

use crate::{Error, Result};

/// Right-hand side of an autonomous-or-not ODE system y' = f(t, y).
///
/// Implementations must be total: trouble is signaled by returning
/// non-finite values, which the solver treats as a recoverable failure
/// and answers by shrinking the step.
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

/// Tolerances and limits for one integration.
#[derive(Debug, Clone)]
pub struct BdfOptions {
    pub rtol: f64,
    /// Per-component absolute tolerance, also the error-weight floor.
    pub atol: Vec<f64>,
    /// Initial step; defaults to 1e-6 of the first requested interval.
    pub h0: Option<f64>,
    /// Cap on total step attempts across the whole integration.
    pub max_steps: usize,
    pub max_order: usize,
}

impl BdfOptions {
    pub fn new(rtol: f64, atol: Vec<f64>) -> Self {
        BdfOptions {
            rtol,
            atol,
            h0: None,
            max_steps: 5_000_000,
            max_order: 5,
        }
    }
}

/// Counters describing a finished or ongoing integration.
#[derive(Debug, Clone, Default)]
pub struct BdfStats {
    pub n_steps: usize,
    pub n_rejected: usize,
    pub n_jacobians: usize,
    pub max_order_used: usize,
}

const NEWTON_MAX_ITERS: usize = 4;
const NEWTON_TOL: f64 = 0.03;
const JAC_MAX_AGE: usize = 50;
const MAX_ATTEMPTS_PER_STEP: usize = 20;

/// Corrector coefficients of the order-q formula: the coefficients of
/// prod_{i=1..q} (x + i)/i, so l[0] = 1 and l[1] is the q-th harmonic
/// number.
fn l_coeffs(q: usize) -> Vec<f64> {
    let mut l = vec![0.0; q + 1];
    l[0] = 1.0;
    for i in 1..=q {
        let fi = i as f64;
        for j in (1..=i).rev() {
            l[j] = (l[j - 1] + fi * l[j]) / fi;
        }
    }
    l
}

/// One adaptive BDF integration in progress.
pub struct Bdf<'a, S: OdeSystem> {
    sys: &'a S,
    n: usize,
    rtol: f64,
    atol: Vec<f64>,
    max_order: usize,
    t: f64,
    /// Nordsieck columns: z[j] approximates h^j y^(j) / j!. Holds
    /// order + 1 columns once the first step has seeded z[1].
    z: Vec<Vec<f64>>,
    /// Column scaling of `z`; zero until the first step.
    h: f64,
    h_next: f64,
    order: usize,
    steps_at_order: usize,
    /// Corrector difference of the last accepted step, kept only while
    /// the step size and order stay unchanged; feeds the order-raise
    /// error proxy.
    delta_prev: Option<Vec<f64>>,
    jac: Vec<f64>,
    have_jac: bool,
    jac_age: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
    attempts_left: usize,
    stats: BdfStats,
}

impl<'a, S: OdeSystem> Bdf<'a, S> {
    pub fn new(sys: &'a S, t0: f64, y0: &[f64], opts: BdfOptions) -> Result<Self> {
        let n = sys.dim();
        if y0.len() != n {
            return Err(Error::DimensionMismatch {
                context: "BDF initial state",
                expected: n,
                got: y0.len(),
            });
        }
        if opts.atol.len() != n {
            return Err(Error::DimensionMismatch {
                context: "BDF absolute tolerance",
                expected: n,
                got: opts.atol.len(),
            });
        }
        if !(opts.rtol > 0.0 && opts.rtol.is_finite()) || opts.atol.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::StepFailure {
                t: t0,
                reason: "tolerances must be positive and finite".into(),
            });
        }
        if !(1..=5).contains(&opts.max_order) {
            return Err(Error::StepFailure {
                t: t0,
                reason: format!("max_order must be 1..=5, got {}", opts.max_order),
            });
        }
        if y0.iter().any(|v| !v.is_finite()) || !t0.is_finite() {
            return Err(Error::StepFailure {
                t: t0,
                reason: "initial state is not finite".into(),
            });
        }
        Ok(Bdf {
            sys,
            n,
            rtol: opts.rtol,
            atol: opts.atol,
            max_order: opts.max_order,
            t: t0,
            z: vec![y0.to_vec()],
            h: 0.0,
            h_next: opts.h0.unwrap_or(0.0),
            order: 1,
            steps_at_order: 0,
            delta_prev: None,
            jac: vec![0.0; n * n],
            have_jac: false,
            jac_age: 0,
            lu: vec![0.0; n * n],
            piv: vec![0; n],
            attempts_left: opts.max_steps,
            stats: BdfStats::default(),
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.z[0]
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn stats(&self) -> &BdfStats {
        &self.stats
    }

    /// Replace the current solution value in place.
    ///
    /// Meant for small post-step corrections such as clipping; the
    /// amendment flows into later predictors through the state columns.
    pub fn override_state(&mut self, y: &[f64]) {
        assert_eq!(y.len(), self.n, "override_state dimension mismatch");
        self.z[0].copy_from_slice(y);
    }

    fn wrms(&self, v: &[f64], weights: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (x, w) in v.iter().zip(weights) {
            let r = x / w;
            acc += r * r;
        }
        (acc / self.n as f64).sqrt()
    }

    /// Rescale the columns from the current step size to `h_new`.
    fn rescale(&mut self, h_new: f64) {
        if h_new == self.h {
            return;
        }
        let r = h_new / self.h;
        let mut s = 1.0;
        for col in self.z.iter_mut().skip(1) {
            s *= r;
            for v in col {
                *v *= s;
            }
        }
        self.h = h_new;
        self.delta_prev = None;
    }

    fn refresh_jacobian(&mut self, t: f64, y: &[f64]) -> bool {
        let n = self.n;
        let mut f0 = vec![0.0; n];
        self.sys.rhs(t, y, &mut f0);
        if f0.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        for j in 0..n {
            let dy = 1e-7 * y[j].abs() + 1e-10;
            yp[j] = y[j] + dy;
            self.sys.rhs(t, &yp, &mut fp);
            yp[j] = y[j];
            for i in 0..n {
                self.jac[i * n + j] = (fp[i] - f0[i]) / dy;
            }
        }
        if self.jac.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.have_jac = true;
        self.jac_age = 0;
        self.stats.n_jacobians += 1;
        true
    }

    /// Factor I - gamma J with partial pivoting. False when singular.
    fn factor(&mut self, gamma: f64) -> bool {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let m = if i == j { 1.0 } else { 0.0 };
                self.lu[i * n + j] = m - gamma * self.jac[i * n + j];
            }
        }
        for col in 0..n {
            let mut pivot = col;
            let mut best = self.lu[col * n + col].abs();
            for row in col + 1..n {
                let v = self.lu[row * n + col].abs();
                if v > best {
                    best = v;
                    pivot = row;
                }
            }
            if !(best > 1e-300) {
                return false;
            }
            self.piv[col] = pivot;
            if pivot != col {
                for j in 0..n {
                    self.lu.swap(col * n + j, pivot * n + j);
                }
            }
            let d = self.lu[col * n + col];
            for row in col + 1..n {
                let factor = self.lu[row * n + col] / d;
                self.lu[row * n + col] = factor;
                for j in col + 1..n {
                    self.lu[row * n + j] -= factor * self.lu[col * n + j];
                }
            }
        }
        true
    }

    fn lu_solve(&self, b: &mut [f64]) {
        let n = self.n;
        for col in 0..n {
            let p = self.piv[col];
            if p != col {
                b.swap(col, p);
            }
            for row in col + 1..n {
                b[row] -= self.lu[row * n + col] * b[col];
            }
        }
        for col in (0..n).rev() {
            b[col] /= self.lu[col * n + col];
            for row in 0..col {
                b[row] -= self.lu[row * n + col] * b[col];
            }
        }
    }

    /// Newton iteration for the corrector equation
    /// y - y_pred = (h f(y) - z_pred[1]) / l_1. Returns the accepted
    /// iterate and its difference from the predictor, or None on any
    /// recoverable trouble.
    fn newton(
        &mut self,
        h: f64,
        l1: f64,
        t_new: f64,
        y_pred: &[f64],
        zp1: &[f64],
        weights: &[f64],
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let gamma = h / l1;

        for fresh in [false, true] {
            if fresh || !self.have_jac {
                if self.jac_age > 0 || !self.have_jac {
                    if !self.refresh_jacobian(t_new, y_pred) {
                        return None;
                    }
                } else if fresh {
                    // The Jacobian is already current; a retry cannot help.
                    return None;
                }
            }
            if !self.factor(gamma) {
                return None;
            }

            let mut y = y_pred.to_vec();
            let mut f = vec![0.0; self.n];
            let mut g = vec![0.0; self.n];
            for _ in 0..NEWTON_MAX_ITERS {
                self.sys.rhs(t_new, &y, &mut f);
                if f.iter().any(|v| !v.is_finite()) {
                    break;
                }
                for i in 0..self.n {
                    g[i] = -(y[i] - y_pred[i] - (h * f[i] - zp1[i]) / l1);
                }
                self.lu_solve(&mut g);
                if g.iter().any(|v| !v.is_finite()) {
                    break;
                }
                for (yi, d) in y.iter_mut().zip(&g) {
                    *yi += d;
                }
                if self.wrms(&g, weights) <= NEWTON_TOL {
                    let delta: Vec<f64> = y.iter().zip(y_pred).map(|(a, b)| a - b).collect();
                    return Some((y, delta));
                }
            }
        }
        None
    }

    /// Advance one accepted step, never past `t_end`.
    ///
    /// A call with no room left before `t_end` is a no-op.
    pub fn step(&mut self, t_end: f64) -> Result<()> {
        let span = t_end - self.t;
        if !(span > 0.0) {
            return Ok(());
        }
        if self.h_next <= 0.0 {
            self.h_next = 1e-6 * span;
        }
        if self.z.len() == 1 {
            // First call: seed the derivative column at the opening step.
            let mut f0 = vec![0.0; self.n];
            self.sys.rhs(self.t, &self.z[0], &mut f0);
            if f0.iter().any(|v| !v.is_finite()) {
                return Err(Error::StepFailure {
                    t: self.t,
                    reason: "right-hand side is not finite at the initial state".into(),
                });
            }
            let h0 = self.h_next.min(span);
            for v in &mut f0 {
                *v *= h0;
            }
            self.z.push(f0);
            self.h = h0;
        }

        let weights: Vec<f64> = self.z[0]
            .iter()
            .zip(&self.atol)
            .map(|(y, a)| a + self.rtol * y.abs())
            .collect();

        let scale = t_end.abs().max(self.t.abs()).max(1.0);
        let mut h = self.h_next.min(span);
        for _attempt in 0..MAX_ATTEMPTS_PER_STEP {
            if self.attempts_left == 0 {
                return Err(Error::StepFailure {
                    t: self.t,
                    reason: "step budget exhausted".into(),
                });
            }
            self.attempts_left -= 1;
            if h < 1e-14 * scale {
                return Err(Error::StepFailure {
                    t: self.t,
                    reason: "step size underflow".into(),
                });
            }
            // Snap to t_end whenever the remainder would be too small
            // to step over afterwards.
            let hits_end = h >= span - 1e-13 * scale;
            if hits_end {
                h = span;
            }

            self.rescale(h);
            let q = self.order;
            let l = l_coeffs(q);

            // Pascal-triangle prediction into a copy; a rejection then
            // leaves the solver state untouched.
            let mut zp = self.z.clone();
            for k in 0..q {
                for j in (k..q).rev() {
                    let (head, tail) = zp.split_at_mut(j + 1);
                    for (d, s) in head[j].iter_mut().zip(&tail[0]) {
                        *d += s;
                    }
                }
            }
            let t_new = if hits_end { t_end } else { self.t + h };

            let Some((y_new, delta)) = self.newton(h, l[1], t_new, &zp[0], &zp[1], &weights)
            else {
                self.stats.n_rejected += 1;
                h *= 0.25;
                continue;
            };

            let est: Vec<f64> = delta.iter().map(|d| d / (q + 1) as f64).collect();
            let err = self.wrms(&est, &weights);
            if !err.is_finite() {
                self.stats.n_rejected += 1;
                h *= 0.25;
                continue;
            }
            if err > 1.0 {
                self.stats.n_rejected += 1;
                let fac = 0.9 * err.powf(-1.0 / (q + 1) as f64);
                h *= fac.clamp(0.2, 0.9);
                continue;
            }

            self.t = t_new;
            self.z[0].copy_from_slice(&y_new);
            for j in 1..=q {
                for ((z, p), d) in self.z[j].iter_mut().zip(&zp[j]).zip(&delta) {
                    *z = p + l[j] * d;
                }
            }
            self.steps_at_order += 1;
            self.jac_age += 1;
            if self.jac_age > JAC_MAX_AGE {
                self.have_jac = false;
            }
            self.stats.n_steps += 1;
            self.stats.max_order_used = self.stats.max_order_used.max(q);

            self.adapt(q, err, delta, &weights, h);
            return Ok(());
        }
        Err(Error::StepFailure {
            t: self.t,
            reason: "too many rejected attempts in one step".into(),
        })
    }

    /// Choose the next order and step size after an accepted step.
    fn adapt(&mut self, q: usize, err_q: f64, delta: Vec<f64>, weights: &[f64], h: f64) {
        let factor_for = |order: usize, err: f64| -> f64 {
            0.9 * err.max(1e-300).powf(-1.0 / (order + 1) as f64)
        };
        let mut best_order = q;
        let mut best_factor = factor_for(q, err_q);

        if self.steps_at_order > q + 1 {
            if q > 1 {
                let est: Vec<f64> = self.z[q].iter().map(|v| v / q as f64).collect();
                let f = factor_for(q - 1, self.wrms(&est, weights));
                if f > 1.05 * best_factor {
                    best_order = q - 1;
                    best_factor = f;
                }
            }
            if q < self.max_order {
                if let Some(prev) = &self.delta_prev {
                    let est: Vec<f64> = delta
                        .iter()
                        .zip(prev)
                        .map(|(d, p)| (d - p) / (q + 2) as f64)
                        .collect();
                    let f = factor_for(q + 1, self.wrms(&est, weights));
                    if f > 1.05 * best_factor {
                        best_order = q + 1;
                        best_factor = f;
                    }
                }
            }
        }

        self.delta_prev = Some(delta);
        if best_order != q {
            if best_order < q {
                self.z.truncate(best_order + 1);
            } else {
                self.z.push(vec![0.0; self.n]);
            }
            self.order = best_order;
            self.steps_at_order = 0;
            self.delta_prev = None;
        }

        // Hold h unless the promised step is clearly larger; shrinking
        // below an accepted size is left to rejections.
        let factor = best_factor.clamp(0.2, 2.5);
        self.h_next = if factor >= 1.5 { h * factor } else { h };
    }
}

/// Drive a fresh solver from `t0` to exactly `t_end`; returns the final
/// state and the run statistics.
pub fn integrate_to<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: BdfOptions,
) -> Result<(Vec<f64>, BdfStats)> {
    let mut solver = Bdf::new(sys, t0, y0, opts)?;
    while solver.t() < t_end {
        solver.step(t_end)?;
    }
    Ok((solver.y().to_vec(), solver.stats().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        lambda: f64,
    }

    impl OdeSystem for Linear {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
            dydt[0] = -self.lambda * y[0];
        }
    }

    struct Cosine;

    impl OdeSystem for Cosine {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, _y: &[f64], dydt: &mut [f64]) {
            dydt[0] = t.cos();
        }
    }

    struct ZeroRhs(usize);

    impl OdeSystem for ZeroRhs {
        fn dim(&self) -> usize {
            self.0
        }
        fn rhs(&self, _t: f64, _y: &[f64], dydt: &mut [f64]) {
            dydt.fill(0.0);
        }
    }

    struct Robertson;

    impl OdeSystem for Robertson {
        fn dim(&self) -> usize {
            3
        }
        fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
            let r1 = 0.04 * y[0];
            let r2 = 1e4 * y[1] * y[2];
            let r3 = 3e7 * y[1] * y[1];
            dydt[0] = -r1 + r2;
            dydt[1] = r1 - r2 - r3;
            dydt[2] = r3;
        }
    }

    struct Blowup;

    impl OdeSystem for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
            dydt[0] = y[0] * y[0];
        }
    }

    #[test]
    fn linear_decay_matches_the_closed_form() {
        let sys = Linear { lambda: 40.0 };
        let opts = BdfOptions::new(1e-8, vec![1e-14]);
        let (y, stats) = integrate_to(&sys, 0.0, &[1.0], 0.5, opts).unwrap();
        let exact = (-20.0f64).exp();
        assert!(
            ((y[0] - exact) / exact).abs() < 1e-4,
            "y = {}, exact = {exact}",
            y[0]
        );
        assert!(stats.n_steps < 3000);
    }

    #[test]
    fn smooth_problem_climbs_in_order() {
        let opts = BdfOptions::new(1e-10, vec![1e-12]);
        let (y, stats) = integrate_to(&Cosine, 0.0, &[0.0], 10.0, opts).unwrap();
        assert!((y[0] - 10.0f64.sin()).abs() < 1e-7);
        assert!(stats.max_order_used >= 3, "stats: {stats:?}");
        assert!(stats.n_steps < 2000);
    }

    #[test]
    fn zero_rhs_stays_constant_and_lands_exactly_on_t_end() {
        let sys = ZeroRhs(3);
        let y0 = [1.0, -2.5, 3.25e-3];
        let mut solver = Bdf::new(&sys, 0.0, &y0, BdfOptions::new(1e-8, vec![1e-12; 3])).unwrap();
        while solver.t() < 7.0 {
            solver.step(7.0).unwrap();
        }
        assert_eq!(solver.t(), 7.0);
        for (a, b) in solver.y().iter().zip(&y0) {
            assert!((a - b).abs() <= 1e-13 * b.abs());
        }
        assert!(solver.stats().n_steps < 80, "stats: {:?}", solver.stats());
    }

    #[test]
    fn robertson_is_consistent_across_tolerances() {
        let atol = vec![1e-10, 1e-14, 1e-10];
        let coarse = BdfOptions::new(1e-6, atol.clone());
        let tight = BdfOptions::new(1e-10, atol);
        let y0 = [1.0, 0.0, 0.0];
        let (yc, _) = integrate_to(&Robertson, 0.0, &y0, 100.0, coarse).unwrap();
        let (yt, _) = integrate_to(&Robertson, 0.0, &y0, 100.0, tight).unwrap();
        for (c, t) in yc.iter().zip(&yt) {
            assert!((c - t).abs() <= 1e-4 * t.abs().max(1e-8), "{yc:?} vs {yt:?}");
        }
        let total: f64 = yc.iter().sum();
        assert!((total - 1.0).abs() < 1e-7, "mass total {total}");
    }

    #[test]
    fn finite_time_blowup_reports_step_failure() {
        let opts = BdfOptions::new(1e-8, vec![1e-10]);
        let err = integrate_to(&Blowup, 0.0, &[1.0], 2.0, opts).unwrap_err();
        assert!(matches!(err, Error::StepFailure { .. }), "got {err}");
    }

    #[test]
    fn exhausted_step_budget_reports_step_failure() {
        let sys = Linear { lambda: 40.0 };
        let mut opts = BdfOptions::new(1e-10, vec![1e-14]);
        opts.max_steps = 3;
        let err = integrate_to(&sys, 0.0, &[1.0], 0.5, opts).unwrap_err();
        assert!(matches!(err, Error::StepFailure { .. }), "got {err}");
    }

    #[test]
    fn override_state_feeds_into_later_steps() {
        let sys = ZeroRhs(1);
        let mut solver = Bdf::new(&sys, 0.0, &[1.0], BdfOptions::new(1e-8, vec![1e-12])).unwrap();
        solver.step(1.0).unwrap();
        solver.override_state(&[0.5]);
        while solver.t() < 1.0 {
            solver.step(1.0).unwrap();
        }
        assert!((solver.y()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bad_setup_is_rejected() {
        let sys = ZeroRhs(2);
        assert!(Bdf::new(&sys, 0.0, &[1.0], BdfOptions::new(1e-8, vec![1e-12; 2])).is_err());
        assert!(Bdf::new(&sys, 0.0, &[1.0, 2.0], BdfOptions::new(0.0, vec![1e-12; 2])).is_err());
        assert!(Bdf::new(&sys, 0.0, &[1.0, f64::NAN], BdfOptions::new(1e-8, vec![1e-12; 2])).is_err());
    }
}

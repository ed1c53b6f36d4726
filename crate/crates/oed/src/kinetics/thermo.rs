//! Two-range NASA-7 polynomial thermodynamics.
//!
//! Each species carries two seven-coefficient fits, one below and one
//! above a switch temperature. All properties are returned in the
//! dimensionless forms cp/R, h/(R T) and s/R; callers scale by the
//! universal gas constant and molecular weight as needed. Temperatures
//! outside the fitted range evaluate the nearest range's polynomial
//! rather than clamping, so cp stays the exact temperature derivative
//! of h everywhere and enthalpy bookkeeping remains self-consistent.

/// Two-range NASA-7 coefficient set for one species.
#[derive(Debug, Clone, PartialEq)]
pub struct Nasa7 {
    pub t_low: f64,
    pub t_mid: f64,
    pub t_high: f64,
    pub low: [f64; 7],
    pub high: [f64; 7],
}

/// cp/R from one coefficient range.
pub(crate) fn cp_r_from(a: &[f64; 7], t: f64) -> f64 {
    a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * a[4])))
}

/// h/(R T) from one coefficient range.
pub(crate) fn h_rt_from(a: &[f64; 7], t: f64) -> f64 {
    a[0] + t * (a[1] / 2.0 + t * (a[2] / 3.0 + t * (a[3] / 4.0 + t * a[4] / 5.0))) + a[5] / t
}

/// s/R from one coefficient range.
pub(crate) fn s_r_from(a: &[f64; 7], t: f64) -> f64 {
    a[0] * t.ln() + t * (a[1] + t * (a[2] / 2.0 + t * (a[3] / 3.0 + t * a[4] / 4.0))) + a[6]
}

impl Nasa7 {
    fn coeffs(&self, t: f64) -> &[f64; 7] {
        if t < self.t_mid {
            &self.low
        } else {
            &self.high
        }
    }

    /// Dimensionless specific heat cp/R at temperature `t`.
    pub fn cp_r(&self, t: f64) -> f64 {
        cp_r_from(self.coeffs(t), t)
    }

    /// Dimensionless enthalpy h/(R T) at temperature `t`.
    pub fn h_rt(&self, t: f64) -> f64 {
        h_rt_from(self.coeffs(t), t)
    }

    /// Dimensionless entropy s/R at temperature `t`.
    pub fn s_r(&self, t: f64) -> f64 {
        s_r_from(self.coeffs(t), t)
    }

    /// Dimensionless Gibbs function g/(R T) = h/(R T) - s/R.
    pub fn g_rt(&self, t: f64) -> f64 {
        self.h_rt(t) - self.s_r(t)
    }
}

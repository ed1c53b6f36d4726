//! Total-order Legendre polynomial chaos surrogates over joint
//! parameter-design inputs.
//!
//! A surrogate replaces the forward model by a truncated expansion
//!
//! ```text
//! G(theta, d) ~ sum_i c_i Psi_i(xi),  xi = affine(theta, d) in [-1,1]^ns
//! ```
//!
//! where the `Psi_i` are products of Legendre polynomials with total
//! degree at most `p`, and the inputs are the model parameters and the
//! design variables jointly, so one expansion serves every design. The
//! number of terms is `C(ns + p, p)`.
//!
//! Coefficients come from non-intrusive spectral projection:
//! `c_i = E[G Psi_i] / E[Psi_i^2]`, with every projection integral for
//! every output computed simultaneously by one adaptive sparse quadrature
//! run ([`crate::dasq`]) that evaluates the model once per node. With too
//! few nodes the projection aliases (higher orders get noisier, not
//! better), which is a property the tests pin down rather than hide.
//!
//! Expansions evaluate through the [`ForwardModel`] contract, so
//! estimators and optimizers accept a surrogate anywhere they accept the
//! real model. Points outside the expansion's input box extrapolate: the
//! evaluation proceeds, and a counter records it for the caller to
//! inspect. [`relative_l2_error`] measures surrogate quality as the ratio
//! `E[(G - Ghat)^2] / E[G^2]` on the expansion's box.

use crate::dasq::{dasq, smolyak_fixed, DasqConfig, DasqResult, IntegrandFamily};
use crate::error::Error;
use crate::model::ForwardModel;
use crate::kahan::KahanSum;
use crate::Result;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Number of total-order terms: `C(n_dims + p, p)`.
pub fn n_pc(n_dims: usize, p: u32) -> usize {
    let mut v: u128 = 1;
    for i in 0..n_dims as u128 {
        v = v * (p as u128 + i + 1) / (i + 1);
    }
    v as usize
}

/// All multi-indices with total degree at most `p`, graded
/// lexicographically: degree ascends, and within one degree the first
/// dimension's order descends.
pub fn total_order_indices(n_dims: usize, p: u32) -> Vec<Vec<u32>> {
    fn fill(out: &mut Vec<Vec<u32>>, prefix: &mut Vec<u32>, dims_left: usize, degree_left: u32) {
        if dims_left == 1 {
            prefix.push(degree_left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=degree_left).rev() {
            prefix.push(first);
            fill(out, prefix, dims_left - 1, degree_left - first);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(n_pc(n_dims, p));
    for degree in 0..=p {
        fill(&mut out, &mut Vec::new(), n_dims, degree);
    }
    out
}

/// Legendre polynomials `P_0..P_max` at `x`, by the three-term
/// recurrence.
fn legendre_all(max: u32, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if max == 0 {
        return;
    }
    out[1] = x;
    for n in 1..max as usize {
        out[n + 1] = ((2 * n + 1) as f64 * x * out[n] - n as f64 * out[n - 1]) / (n + 1) as f64;
    }
}

/// `E[Psi_i^2]` under the uniform probability measure on `[-1,1]^ns`.
pub fn basis_norm(index: &[u32]) -> f64 {
    index.iter().map(|&i| 1.0 / (2.0 * i as f64 + 1.0)).product()
}

/// Affine map between a physical input box and `[-1, 1]^ns`, with the
/// parameter dimensions first and the design dimensions after them.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMap {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl InputMap {
    /// Joint box from parameter bounds followed by design bounds.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                context: "input map bounds",
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

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Physical joint point to `[-1, 1]^ns` coordinates.
    pub fn to_unit(&self, joint: &[f64], xi: &mut [f64]) {
        for (k, x) in xi.iter_mut().enumerate() {
            *x = 2.0 * (joint[k] - self.lo[k]) / (self.hi[k] - self.lo[k]) - 1.0;
        }
    }

    /// `[-1, 1]^ns` coordinates to a physical joint point.
    pub fn from_unit(&self, xi: &[f64], joint: &mut [f64]) {
        for (k, x) in joint.iter_mut().enumerate() {
            *x = self.lo[k] + 0.5 * (xi[k] + 1.0) * (self.hi[k] - self.lo[k]);
        }
    }
}

/// A truncated expansion with its input map; usable as a [`ForwardModel`].
#[derive(Debug)]
pub struct PcExpansion {
    n_theta: usize,
    n_design: usize,
    n_y: usize,
    order: u32,
    indices: Vec<Vec<u32>>,
    /// Row-major `n_terms x n_y`.
    coeffs: Vec<f64>,
    map: InputMap,
    extrapolations: AtomicUsize,
}

impl PcExpansion {
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn n_terms(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn input_map(&self) -> &InputMap {
        &self.map
    }

    /// How many evaluations so far fell outside the input box.
    pub fn extrapolation_count(&self) -> usize {
        self.extrapolations.load(Ordering::Relaxed)
    }

    /// Expansion variance per output by Parseval:
    /// `sum_{i != 0} c_i^2 E[Psi_i^2]`.
    pub fn variance(&self) -> Vec<f64> {
        let mut out = vec![KahanSum::new(); self.n_y];
        for (t, index) in self.indices.iter().enumerate() {
            if index.iter().all(|&i| i == 0) {
                continue;
            }
            let norm = basis_norm(index);
            for c in 0..self.n_y {
                let v = self.coeffs[t * self.n_y + c];
                out[c].add(v * v * norm);
            }
        }
        out.iter().map(|a| a.value()).collect()
    }

    fn eval_unit(&self, xi: &[f64], out: &mut [f64]) {
        let ns = self.map.dim();
        let mut table = vec![0.0f64; ns * (self.order as usize + 1)];
        for k in 0..ns {
            legendre_all(
                self.order,
                xi[k],
                &mut table[k * (self.order as usize + 1)..(k + 1) * (self.order as usize + 1)],
            );
        }
        let mut acc = vec![KahanSum::new(); self.n_y];
        for (t, index) in self.indices.iter().enumerate() {
            let mut psi = 1.0;
            for (k, &i) in index.iter().enumerate() {
                psi *= table[k * (self.order as usize + 1) + i as usize];
            }
            for c in 0..self.n_y {
                acc[c].add(self.coeffs[t * self.n_y + c] * psi);
            }
        }
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = a.value();
        }
    }
}

impl ForwardModel for PcExpansion {
    fn n_theta(&self) -> usize {
        self.n_theta
    }
    fn n_design(&self) -> usize {
        self.n_design
    }
    fn n_y(&self) -> usize {
        self.n_y
    }

    fn eval(&self, theta: &[f64], design: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_shapes(theta, design, out)?;
        let ns = self.map.dim();
        let mut joint = vec![0.0f64; ns];
        joint[..self.n_theta].copy_from_slice(theta);
        joint[self.n_theta..].copy_from_slice(design);
        let mut xi = vec![0.0f64; ns];
        self.map.to_unit(&joint, &mut xi);
        if xi.iter().any(|&x| !(-1.0..=1.0).contains(&x)) {
            self.extrapolations.fetch_add(1, Ordering::Relaxed);
        }
        self.eval_unit(&xi, out);
        Ok(())
    }
}

/// The projection integrand family: base is the model output, expansion
/// multiplies it by every basis polynomial.
struct ProjectionFamily<'a, M> {
    model: &'a M,
    map: &'a InputMap,
    order: u32,
    indices: &'a [Vec<u32>],
}

impl<M: ForwardModel> IntegrandFamily for ProjectionFamily<'_, M> {
    fn dim(&self) -> usize {
        self.map.dim()
    }
    fn n_base(&self) -> usize {
        self.model.n_y()
    }
    fn n_outputs(&self) -> usize {
        self.indices.len() * self.model.n_y()
    }

    fn eval_base(&self, xi: &[f64], out: &mut [f64]) -> Result<()> {
        let ns = self.map.dim();
        let mut joint = vec![0.0f64; ns];
        self.map.from_unit(xi, &mut joint);
        let n_theta = self.model.n_theta();
        self.model.eval(&joint[..n_theta], &joint[n_theta..], out)
    }

    fn expand(&self, xi: &[f64], base: &[f64], out: &mut [f64]) {
        let ns = self.map.dim();
        let stride = self.order as usize + 1;
        let mut table = vec![0.0f64; ns * stride];
        for k in 0..ns {
            legendre_all(self.order, xi[k], &mut table[k * stride..(k + 1) * stride]);
        }
        let n_y = base.len();
        for (t, index) in self.indices.iter().enumerate() {
            let mut psi = 1.0;
            for (k, &i) in index.iter().enumerate() {
                psi *= table[k * stride + i as usize];
            }
            for (c, &b) in base.iter().enumerate() {
                out[t * n_y + c] = b * psi;
            }
        }
    }
}

/// Project a model onto the order-`p` expansion by adaptive sparse
/// quadrature; one run integrates all coefficients for all outputs.
pub fn nisp_project(
    model: &impl ForwardModel,
    map: &InputMap,
    order: u32,
    config: &DasqConfig,
) -> Result<(PcExpansion, DasqResult)> {
    let ns = model.n_theta() + model.n_design();
    if map.dim() != ns {
        return Err(Error::DimensionMismatch {
            context: "input map vs model joint dimension",
            expected: ns,
            got: map.dim(),
        });
    }
    let indices = total_order_indices(ns, order);
    let family = ProjectionFamily { model, map, order, indices: &indices };
    let result = dasq(&family, config)?;

    let n_y = model.n_y();
    let mut coeffs = vec![0.0f64; indices.len() * n_y];
    for (t, index) in indices.iter().enumerate() {
        let norm = basis_norm(index);
        for c in 0..n_y {
            coeffs[t * n_y + c] = result.integrals[t * n_y + c] / norm;
        }
    }
    Ok((
        PcExpansion {
            n_theta: model.n_theta(),
            n_design: model.n_design(),
            n_y,
            order,
            indices,
            coeffs,
            map: map.clone(),
            extrapolations: AtomicUsize::new(0),
        },
        result,
    ))
}

/// Squared relative L2 error per output, `E[(G - Ghat)^2] / E[G^2]` over
/// the expansion's input box, by fixed Smolyak quadrature of the given
/// level.
pub fn relative_l2_error(
    model: &impl ForwardModel,
    expansion: &PcExpansion,
    level: u32,
) -> Result<Vec<f64>> {
    let ns = expansion.map.dim();
    let n_y = expansion.n_y;
    let family = crate::dasq::FnIntegrand::new(ns, 2 * n_y, |xi: &[f64], out: &mut [f64]| {
        let mut joint = vec![0.0f64; ns];
        expansion.map.from_unit(xi, &mut joint);
        let n_theta = expansion.n_theta;
        let mut g = vec![0.0f64; n_y];
        model.eval(&joint[..n_theta], &joint[n_theta..], &mut g)?;
        let mut ghat = vec![0.0f64; n_y];
        expansion.eval_unit(xi, &mut ghat);
        for c in 0..n_y {
            let d = g[c] - ghat[c];
            out[c] = d * d;
            out[n_y + c] = g[c] * g[c];
        }
        Ok(())
    });
    let result = smolyak_fixed(&family, level)?;
    let mut ratios = Vec::with_capacity(n_y);
    for c in 0..n_y {
        let denom = result.integrals[n_y + c];
        if !(denom.is_finite() && denom > 0.0) {
            return Err(Error::ZeroDenominator { context: "relative L2 error" });
        }
        ratios.push(result.integrals[c] / denom);
    }
    Ok(ratios)
}

/// Serialize an expansion to the versioned text format.
///
/// Floats print through the shortest round-trip formatter, so
/// save, load and save again produce byte-identical text.
pub fn to_text(e: &PcExpansion) -> String {
    let mut s = String::new();
    s.push_str("pce-text v1\n");
    s.push_str(&format!("n_theta {}\n", e.n_theta));
    s.push_str(&format!("n_design {}\n", e.n_design));
    s.push_str(&format!("n_y {}\n", e.n_y));
    s.push_str(&format!("order {}\n", e.order));
    let fmt_row = |xs: &[f64]| {
        xs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
    };
    s.push_str(&format!("lo {}\n", fmt_row(&e.map.lo)));
    s.push_str(&format!("hi {}\n", fmt_row(&e.map.hi)));
    s.push_str(&format!("n_terms {}\n", e.indices.len()));
    for (t, index) in e.indices.iter().enumerate() {
        let idx = index.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        let row = &e.coeffs[t * e.n_y..(t + 1) * e.n_y];
        s.push_str(&format!("term {} coeff {}\n", idx, fmt_row(row)));
    }
    s
}

/// Parse the text format written by [`to_text`]. Lines starting with
/// `#` are provenance comments and are skipped; reported line numbers
/// still count them.
pub fn from_text(text: &str) -> Result<PcExpansion> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#'));
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            reason: format!("unexpected end of input, expected {what}"),
        })
    };
    let parse_err = |line: usize, reason: String| Error::Parse { line: line + 1, reason };

    let (ln, header) = next("header")?;
    if header.trim() != "pce-text v1" {
        return Err(parse_err(ln, format!("unsupported header {header:?}")));
    }

    fn field<T: std::str::FromStr>(line: usize, text: &str, key: &str) -> Result<T> {
        let rest = text
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::Parse {
                line: line + 1,
                reason: format!("expected {key:?} line, got {text:?}"),
            })?;
        rest.trim().parse::<T>().map_err(|_| Error::Parse {
            line: line + 1,
            reason: format!("bad {key} value {rest:?}"),
        })
    }

    fn row<T: std::str::FromStr>(line: usize, text: &str, key: &str, n: usize) -> Result<Vec<T>> {
        let rest = text.strip_prefix(key).ok_or_else(|| Error::Parse {
            line: line + 1,
            reason: format!("expected {key:?} line, got {text:?}"),
        })?;
        let vals: Vec<T> = rest
            .split_whitespace()
            .map(|t| t.parse::<T>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: line + 1,
                reason: format!("bad {key} row {rest:?}"),
            })?;
        if vals.len() != n {
            return Err(Error::Parse {
                line: line + 1,
                reason: format!("{key} row has {} entries, expected {n}", vals.len()),
            });
        }
        Ok(vals)
    }

    let (ln, s) = next("n_theta")?;
    let n_theta: usize = field(ln, s, "n_theta")?;
    let (ln, s) = next("n_design")?;
    let n_design: usize = field(ln, s, "n_design")?;
    let (ln, s) = next("n_y")?;
    let n_y: usize = field(ln, s, "n_y")?;
    let (ln, s) = next("order")?;
    let order: u32 = field(ln, s, "order")?;
    let ns = n_theta + n_design;
    let (ln, s) = next("lo")?;
    let lo: Vec<f64> = row(ln, s, "lo", ns)?;
    let (ln, s) = next("hi")?;
    let hi: Vec<f64> = row(ln, s, "hi", ns)?;
    let (ln, s) = next("n_terms")?;
    let n_terms: usize = field(ln, s, "n_terms")?;

    let expected = total_order_indices(ns, order);
    if expected.len() != n_terms {
        return Err(parse_err(
            ln,
            format!("order {order} in {ns} dims has {} terms, file says {n_terms}", expected.len()),
        ));
    }

    let mut coeffs = vec![0.0f64; n_terms * n_y];
    for (t, want_index) in expected.iter().enumerate() {
        let (ln, s) = next("term")?;
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.first() != Some(&"term") || parts.len() != 2 + ns + n_y || parts[1 + ns] != "coeff"
        {
            return Err(parse_err(ln, format!("malformed term line {s:?}")));
        }
        let index: Vec<u32> = parts[1..1 + ns]
            .iter()
            .map(|t| t.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(ln, format!("bad index in {s:?}")))?;
        if &index != want_index {
            return Err(parse_err(
                ln,
                format!("term order mismatch: got {index:?}, expected {want_index:?}"),
            ));
        }
        for c in 0..n_y {
            coeffs[t * n_y + c] = parts[2 + ns + c]
                .parse::<f64>()
                .map_err(|_| parse_err(ln, format!("bad coefficient in {s:?}")))?;
        }
    }

    Ok(PcExpansion {
        n_theta,
        n_design,
        n_y,
        order,
        indices: expected,
        coeffs,
        map: InputMap::new(lo, hi)?,
        extrapolations: AtomicUsize::new(0),
    })
}

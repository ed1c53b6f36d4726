//! Trajectory records and combustion observable extraction.
//!
//! A [`Trajectory`] holds the accepted integrator nodes: time,
//! temperature, mole fractions, and the enthalpy exchange rate dh/dt
//! (negative while the mixture releases enthalpy into heat).
//! [`extract_observables`] reduces a trajectory to the ten scalar
//! observables used by the design studies: log peak times and peak
//! values of the enthalpy release rate and of the O, H, HO2, and H2O2
//! mole fractions. Peak locations are refined with a quadratic fit
//! through the discrete maximum and its two neighbors.

use super::mechanism::Mechanism;
use crate::{Error, Result};

/// Time history of one reactor integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub temperature: Vec<f64>,
    /// Mole fractions, node-major, `n_species` per node.
    x: Vec<f64>,
    pub dhdt: Vec<f64>,
    n_species: usize,
    /// Mass-fraction components clipped to zero for dipping below -atol.
    pub clipped: usize,
}

impl Trajectory {
    pub(crate) fn new(n_species: usize) -> Self {
        Trajectory {
            t: Vec::new(),
            temperature: Vec::new(),
            x: Vec::new(),
            dhdt: Vec::new(),
            n_species,
            clipped: 0,
        }
    }

    pub(crate) fn push_node(&mut self, t: f64, temperature: f64, x: &[f64], dhdt: f64) {
        assert_eq!(x.len(), self.n_species);
        self.t.push(t);
        self.temperature.push(temperature);
        self.x.extend_from_slice(x);
        self.dhdt.push(dhdt);
    }

    pub fn n_nodes(&self) -> usize {
        self.t.len()
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    /// Mole fractions at one node.
    pub fn x_at(&self, node: usize) -> &[f64] {
        &self.x[node * self.n_species..(node + 1) * self.n_species]
    }

    /// One species' mole-fraction history.
    pub fn species_history(&self, j: usize) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.x_at(i)[j]).collect()
    }
}

/// The ten scalar observables of one trajectory.
///
/// Times are in log seconds; the ignition delay is the time of peak
/// enthalpy release rate. `peak_dhdt` keeps its sign, so a releasing
/// mixture reports a negative value.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSet {
    pub ln_tau_ign: f64,
    pub ln_tau_o: f64,
    pub ln_tau_h: f64,
    pub ln_tau_ho2: f64,
    pub ln_tau_h2o2: f64,
    pub peak_dhdt: f64,
    pub peak_x_o: f64,
    pub peak_x_h: f64,
    pub peak_x_ho2: f64,
    pub peak_x_h2o2: f64,
}

impl ObservableSet {
    /// The observables in their reporting order.
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.ln_tau_ign,
            self.ln_tau_o,
            self.ln_tau_h,
            self.ln_tau_ho2,
            self.ln_tau_h2o2,
            self.peak_dhdt,
            self.peak_x_o,
            self.peak_x_h,
            self.peak_x_ho2,
            self.peak_x_h2o2,
        ]
    }
}

/// Interior peak of a sampled signal with quadratic refinement.
///
/// Returns (arg-time, value) of the maximum. The discrete argmax must
/// be interior; a quadratic through it and its neighbors sharpens both
/// the time and the value, falling back to the node itself when the
/// three points are collinear.
fn refined_peak(t: &[f64], s: &[f64], what: &'static str) -> Result<(f64, f64)> {
    let n = s.len();
    let mut best = 0;
    for i in 1..n {
        if s[i] > s[best] {
            best = i;
        }
    }
    if best == 0 {
        return Err(Error::NoPeak {
            what,
            which: "left",
        });
    }
    if best == n - 1 {
        return Err(Error::NoPeak {
            what,
            which: "right",
        });
    }

    let (d1, d2) = (t[best] - t[best - 1], t[best + 1] - t[best]);
    let sl = s[best - 1] - s[best];
    let sr = s[best + 1] - s[best];
    let denom = d1 * d2 * (d1 + d2);
    let a = (d1 * sr + d2 * sl) / denom;
    let b = (d1 * d1 * sr - d2 * d2 * sl) / denom;
    if !(a < 0.0) {
        return Ok((t[best], s[best]));
    }
    let delta = (-b / (2.0 * a)).clamp(-d1, d2);
    Ok((t[best] + delta, s[best] + b * delta + a * delta * delta))
}

/// Reduce a trajectory to its observable set.
///
/// Needs the owning mechanism to locate the O, H, HO2, and H2O2
/// columns. Fails with [`Error::NoPeak`] when any signal is monotone
/// over the window, and refuses non-positive peak times.
pub fn extract_observables(traj: &Trajectory, mech: &Mechanism) -> Result<ObservableSet> {
    if traj.n_nodes() < 3 {
        return Err(Error::InvalidState {
            reason: format!(
                "trajectory needs at least three nodes, got {}",
                traj.n_nodes()
            ),
        });
    }

    // Enthalpy release peaks where dh/dt is most negative.
    let release: Vec<f64> = traj.dhdt.iter().map(|v| -v).collect();
    let (tau_ign, peak_release) = refined_peak(&traj.t, &release, "dh/dt")?;

    let columns = [
        ("O", "X_O"),
        ("H", "X_H"),
        ("HO2", "X_HO2"),
        ("H2O2", "X_H2O2"),
    ];
    let mut taus = [0.0; 4];
    let mut peaks = [0.0; 4];
    for (slot, (species, label)) in columns.into_iter().enumerate() {
        let j = mech.species_index(species)?;
        let hist = traj.species_history(j);
        (taus[slot], peaks[slot]) = refined_peak(&traj.t, &hist, label)?;
    }

    for (&tau, what) in std::iter::once(&tau_ign)
        .chain(taus.iter())
        .zip(["dh/dt", "X_O", "X_H", "X_HO2", "X_H2O2"])
    {
        if !(tau > 0.0) {
            return Err(Error::NoPeak { what, which: "left" });
        }
    }

    Ok(ObservableSet {
        ln_tau_ign: tau_ign.ln(),
        ln_tau_o: taus[0].ln(),
        ln_tau_h: taus[1].ln(),
        ln_tau_ho2: taus[2].ln(),
        ln_tau_h2o2: taus[3].ln(),
        peak_dhdt: -peak_release,
        peak_x_o: peaks[0],
        peak_x_h: peaks[1],
        peak_x_ho2: peaks[2],
        peak_x_h2o2: peaks[3],
    })
}

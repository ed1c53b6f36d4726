//! Constant-pressure adiabatic gas-phase reactor physics.
//!
//! Rate constants in modified Arrhenius form with equilibrium-consistent
//! reverse rates, species production rates with third-body colliders,
//! the governing equations for a spatially homogeneous constant-pressure
//! adiabatic mixture, and the stiff-integrator driver that turns an
//! initial state into a [`Trajectory`].
//!
//! Units throughout: temperature K, pressure Pa, concentration
//! kmol/m^3, energy J, mass kg. The mixture is a perfect gas, so
//! rho = p W_bar / (R_u T).

use super::mechanism::{Mechanism, Reaction};
use super::observables::Trajectory;
use super::stiff::{Bdf, BdfOptions, OdeSystem};
use crate::{Error, Result};

/// Universal gas constant, J/(kmol K).
pub const RU: f64 = 8314.472;

/// Standard-state pressure for equilibrium constants, Pa.
pub const P_STD: f64 = 101325.0;

/// Instantaneous thermochemical state of a well-mixed gas.
#[derive(Debug, Clone)]
pub struct MixtureState {
    /// Temperature, K.
    pub t: f64,
    /// Mole fractions, summing to one within 1e-12.
    pub x: Vec<f64>,
    /// Pressure, Pa.
    pub p: f64,
}

impl MixtureState {
    pub fn new(t: f64, x: Vec<f64>, p: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidState {
                reason: format!("temperature must be positive, got {t}"),
            });
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidState {
                reason: format!("pressure must be positive, got {p}"),
            });
        }
        if let Some(bad) = x.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidState {
                reason: format!("mole fractions must be finite and nonnegative, got {bad}"),
            });
        }
        let sum: f64 = x.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState {
                reason: format!("mole fractions sum to {sum}, expected 1"),
            });
        }
        Ok(MixtureState { t, x, p })
    }

    /// Mean molecular weight W_bar = sum X_j W_j, kg/kmol.
    pub fn mean_weight(&self, mech: &Mechanism) -> f64 {
        self.x
            .iter()
            .zip(&mech.species)
            .map(|(x, s)| x * s.weight)
            .sum()
    }

    /// Mass density rho = p W_bar / (R_u T), kg/m^3.
    pub fn density(&self, mech: &Mechanism) -> f64 {
        self.p * self.mean_weight(mech) / (RU * self.t)
    }

    /// Mass fractions Y_j = X_j W_j / W_bar.
    pub fn mass_fractions(&self, mech: &Mechanism) -> Vec<f64> {
        let wbar = self.mean_weight(mech);
        self.x
            .iter()
            .zip(&mech.species)
            .map(|(x, s)| x * s.weight / wbar)
            .collect()
    }

    /// Molar concentrations C_j = X_j p / (R_u T), kmol/m^3.
    pub fn concentrations(&self) -> Vec<f64> {
        let ctot = self.p / (RU * self.t);
        self.x.iter().map(|x| x * ctot).collect()
    }
}

/// Mole fractions from mass fractions, X_j = (Y_j/W_j) / sum_n (Y_n/W_n).
pub fn mole_from_mass(mech: &Mechanism, y: &[f64]) -> Result<Vec<f64>> {
    check_len(mech, y.len(), "mass fractions")?;
    let total: f64 = y.iter().zip(&mech.species).map(|(y, s)| y / s.weight).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroDenominator {
            context: "mole fractions from mass fractions",
        });
    }
    Ok(y.iter()
        .zip(&mech.species)
        .map(|(y, s)| y / s.weight / total)
        .collect())
}

/// Fresh H2/O2 mixture at equivalence ratio `phi`.
///
/// The equivalence ratio compares the oxidizer-to-fuel mole ratio with
/// its stoichiometric value of 1/2 for 2 H2 + O2, so X_H2 = 2 phi /
/// (2 phi + 1) and X_O2 carries the remainder.
pub fn initial_state(mech: &Mechanism, phi: f64, t0: f64, p: f64) -> Result<MixtureState> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::InvalidState {
            reason: format!("equivalence ratio must be positive, got {phi}"),
        });
    }
    let h2 = mech.species_index("H2")?;
    let o2 = mech.species_index("O2")?;
    let mut x = vec![0.0; mech.n_species()];
    x[h2] = 2.0 * phi / (2.0 * phi + 1.0);
    x[o2] = 1.0 - x[h2];
    MixtureState::new(t0, x, p)
}

/// Forward and reverse rate constants of reaction `m` at temperature `t`.
///
/// k_f = A T^b exp(-Ea/(R_u T)); the reverse constant comes from the
/// equilibrium constant, k_r = k_f / K_c with K_c = exp(-dG0/(R_u T))
/// times (p0/(R_u T))^dnu to move from the standard state to
/// concentration units. Irreversible reactions return k_r = 0.
pub fn rate_constants(mech: &Mechanism, m: usize, t: f64) -> (f64, f64) {
    let r = &mech.reactions[m];
    let kf = arrhenius(r, t);
    if !r.reversible {
        return (kf, 0.0);
    }
    let mut dg_rt = 0.0;
    for &(j, nu) in &r.products {
        dg_rt += f64::from(nu) * mech.species[j].thermo.g_rt(t);
    }
    for &(j, nu) in &r.reactants {
        dg_rt -= f64::from(nu) * mech.species[j].thermo.g_rt(t);
    }
    let ln_kc = -dg_rt + f64::from(r.dnu) * (P_STD / (RU * t)).ln();
    (kf, kf * (-ln_kc).exp())
}

fn arrhenius(r: &Reaction, t: f64) -> f64 {
    r.a * t.powf(r.b) * (-r.ea / (RU * t)).exp()
}

fn check_len(mech: &Mechanism, got: usize, context: &'static str) -> Result<()> {
    if got != mech.n_species() {
        return Err(Error::DimensionMismatch {
            context,
            expected: mech.n_species(),
            got,
        });
    }
    Ok(())
}

/// Visit every reaction's forward and reverse rates of progress
/// (kmol/(m^3 s), third-body factor included) at concentrations `c`.
fn for_each_flux(mech: &Mechanism, t: f64, c: &[f64], mut visit: impl FnMut(usize, f64, f64)) {
    for (m, r) in mech.reactions.iter().enumerate() {
        let (kf, kr) = rate_constants(mech, m, t);
        let mut fwd = kf;
        for &(j, nu) in &r.reactants {
            fwd *= c[j].powi(nu as i32);
        }
        let mut rev = kr;
        if r.reversible {
            for &(j, nu) in &r.products {
                rev *= c[j].powi(nu as i32);
            }
        }
        if r.third_body {
            let m_conc: f64 = r.efficiencies.iter().zip(c).map(|(e, c)| e * c).sum();
            fwd *= m_conc;
            rev *= m_conc;
        }
        visit(m, fwd, rev);
    }
}

/// Forward and reverse rates of progress per reaction at a state.
pub fn rates_of_progress(mech: &Mechanism, state: &MixtureState) -> Result<Vec<(f64, f64)>> {
    check_len(mech, state.x.len(), "mixture state")?;
    let c = state.concentrations();
    let mut out = Vec::with_capacity(mech.reactions.len());
    for_each_flux(mech, state.t, &c, |_, fwd, rev| out.push((fwd, rev)));
    Ok(out)
}

/// Net molar production rate of every species, kmol/(m^3 s).
pub fn production_rates(mech: &Mechanism, state: &MixtureState) -> Result<Vec<f64>> {
    check_len(mech, state.x.len(), "mixture state")?;
    let c = state.concentrations();
    let mut wdot = vec![0.0; mech.n_species()];
    accumulate_wdot(mech, state.t, &c, &mut wdot);
    Ok(wdot)
}

fn accumulate_wdot(mech: &Mechanism, t: f64, c: &[f64], wdot: &mut [f64]) {
    let reactions = &mech.reactions;
    for_each_flux(mech, t, c, |m, fwd, rev| {
        let net = fwd - rev;
        let r = &reactions[m];
        for &(j, nu) in &r.reactants {
            wdot[j] -= f64::from(nu) * net;
        }
        for &(j, nu) in &r.products {
            wdot[j] += f64::from(nu) * net;
        }
    });
}

/// Mixture specific heat at constant pressure from mass fractions,
/// J/(kg K).
pub fn cp_mass(mech: &Mechanism, t: f64, y: &[f64]) -> f64 {
    RU * y
        .iter()
        .zip(&mech.species)
        .map(|(y, s)| y / s.weight * s.thermo.cp_r(t))
        .sum::<f64>()
}

/// Mixture specific enthalpy from mass fractions, J/kg.
pub fn enthalpy_mass(mech: &Mechanism, t: f64, y: &[f64]) -> f64 {
    RU * t
        * y.iter()
            .zip(&mech.species)
            .map(|(y, s)| y / s.weight * s.thermo.h_rt(t))
            .sum::<f64>()
}

/// Governing equations on raw mass-fraction state, shared by the public
/// wrapper and the integrator. Fills dY/dt and returns (dT/dt, dh/dt)
/// where dh/dt = sum_n h_n dY_n/dt is the enthalpy exchange rate between
/// chemical and thermal form (negative while enthalpy is released).
fn rhs_mass(mech: &Mechanism, p: f64, t: f64, y: &[f64], dydt: &mut [f64]) -> (f64, f64) {
    let n = mech.n_species();
    let inv_wbar: f64 = y.iter().zip(&mech.species).map(|(y, s)| y / s.weight).sum();
    let rho = p / (RU * t * inv_wbar);

    let mut c = vec![0.0; n];
    for j in 0..n {
        c[j] = rho * y[j] / mech.species[j].weight;
    }
    let mut wdot = vec![0.0; n];
    accumulate_wdot(mech, t, &c, &mut wdot);

    let mut h_wdot = 0.0;
    let mut cp = 0.0;
    for j in 0..n {
        let s = &mech.species[j];
        dydt[j] = wdot[j] * s.weight / rho;
        h_wdot += s.thermo.h_rt(t) * wdot[j];
        cp += y[j] / s.weight * s.thermo.cp_r(t);
    }
    let cp = RU * cp;
    let dhdt = RU * t * h_wdot / rho;
    (-dhdt / cp, dhdt)
}

/// Species and temperature equations at a validated state.
///
/// Returns (dY/dt, dT/dt) with dY_j/dt = omega_j W_j / rho and
/// dT/dt = -(1/(rho c_p)) sum_n h_n omega_n W_n.
pub fn rhs(mech: &Mechanism, state: &MixtureState) -> Result<(Vec<f64>, f64)> {
    check_len(mech, state.x.len(), "mixture state")?;
    let y = state.mass_fractions(mech);
    let mut dydt = vec![0.0; mech.n_species()];
    let (dtdt, _) = rhs_mass(mech, state.p, state.t, &y, &mut dydt);
    Ok((dydt, dtdt))
}

/// The reactor as an ODE system on [Y_1..Y_n, T] at fixed pressure.
struct Reactor<'a> {
    mech: &'a Mechanism,
    p: f64,
}

impl OdeSystem for Reactor<'_> {
    fn dim(&self) -> usize {
        self.mech.n_species() + 1
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let n = self.mech.n_species();
        let (state, temp) = y.split_at(n);
        let (dy, _) = dydt.split_at_mut(n);
        let (dtdt, _) = rhs_mass(self.mech, self.p, temp[0], state, dy);
        dydt[n] = dtdt;
    }
}

/// Integrate the constant-pressure adiabatic reactor from `state0` to
/// `t_end`, recording every accepted step in the trajectory.
///
/// `atol` applies to mass fractions; the temperature component uses
/// `atol` scaled by the initial temperature. Mass fractions that fall
/// below `-atol` are clipped to zero and counted in
/// [`Trajectory::clipped`].
pub fn integrate(
    mech: &Mechanism,
    state0: &MixtureState,
    t_end: f64,
    rtol: f64,
    atol: f64,
) -> Result<Trajectory> {
    check_len(mech, state0.x.len(), "initial mixture state")?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidState {
            reason: format!("integration window must be positive, got {t_end}"),
        });
    }
    let n = mech.n_species();
    let reactor = Reactor { mech, p: state0.p };

    let mut y0 = state0.mass_fractions(mech);
    y0.push(state0.t);
    let mut atol_vec = vec![atol; n];
    atol_vec.push(atol * state0.t);

    let mut solver = Bdf::new(&reactor, 0.0, &y0, BdfOptions::new(rtol, atol_vec))?;
    let mut traj = Trajectory::new(n);
    record_node(mech, state0.p, &mut traj, 0.0, solver.y());

    let mut clip_buf = vec![0.0; n + 1];
    while solver.t() < t_end {
        solver.step(t_end)?;
        let mut needs_clip = false;
        for &v in &solver.y()[..n] {
            if v < -atol {
                needs_clip = true;
            }
        }
        if needs_clip {
            clip_buf.copy_from_slice(solver.y());
            for v in &mut clip_buf[..n] {
                if *v < -atol {
                    *v = 0.0;
                    traj.clipped += 1;
                }
            }
            solver.override_state(&clip_buf);
        }
        record_node(mech, state0.p, &mut traj, solver.t(), solver.y());
    }
    Ok(traj)
}

fn record_node(mech: &Mechanism, p: f64, traj: &mut Trajectory, t: f64, y_full: &[f64]) {
    let n = mech.n_species();
    let (y, temp) = y_full.split_at(n);
    let temp = temp[0];
    // Round-off negatives inside the solver's clipping dead band are
    // zeroed here so that recorded nodes are valid mixture states.
    let moles: Vec<f64> = y
        .iter()
        .zip(&mech.species)
        .map(|(y, s)| (y / s.weight).max(0.0))
        .collect();
    let total: f64 = moles.iter().sum();
    let x: Vec<f64> = moles.iter().map(|m| m / total).collect();
    let mut dydt = vec![0.0; n];
    let (_, dhdt) = rhs_mass(mech, p, temp, y, &mut dydt);
    traj.push_node(t, temp, &x, dhdt);
}

#[cfg(test)]
mod tests {
    use super::*;

    const AB_THERMO: &str = "\
species A 10.0 H:2 200.0 1000.0 3500.0
low  2.5 0.0 0.0 0.0 0.0 100.0 1.0
high 2.5 0.0 0.0 0.0 0.0 100.0 1.0
species B 10.0 H:2 200.0 1000.0 3500.0
low  2.5 0.0 0.0 0.0 0.0 100.0 1.0
high 2.5 0.0 0.0 0.0 0.0 100.0 1.0
";

    fn toy(reactions: &str) -> Mechanism {
        Mechanism::parse(AB_THERMO, reactions).unwrap()
    }

    #[test]
    fn arrhenius_trivial_forms_hold() {
        let mech = toy("A = B ; 7.5 0.0 0.0\n");
        for &t in &[300.0, 1000.0, 2500.0] {
            let (kf, _) = rate_constants(&mech, 0, t);
            assert_eq!(kf, 7.5);
        }

        let t = 1234.0;
        let mech = toy(&format!("A = B ; 7.5 0.0 {}\n", RU * t * 2.0f64.ln()));
        let (kf, _) = rate_constants(&mech, 0, t);
        assert!((kf - 3.75).abs() < 1e-12);
    }

    #[test]
    fn symmetric_thermo_gives_equal_forward_and_reverse_constants() {
        // A and B share one thermo fit, so dG0 = 0 and dnu = 0: K_c = 1.
        let mech = toy("A = B ; 7.5 0.5 1.0e6\n");
        for &t in &[400.0, 1600.0] {
            let (kf, kr) = rate_constants(&mech, 0, t);
            assert!((kf - kr).abs() <= 1e-15 * kf);
        }

        let mech = toy("A -> B ; 7.5 0.0 0.0\n");
        assert_eq!(rate_constants(&mech, 0, 1000.0).1, 0.0);
    }

    #[test]
    fn initial_state_matches_the_equivalence_ratio_definition() {
        let mech = Mechanism::builtin();
        let h2 = mech.species_index("H2").unwrap();
        let o2 = mech.species_index("O2").unwrap();

        let s = initial_state(&mech, 1.0, 1000.0, P_STD).unwrap();
        assert!((s.x[h2] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.x[o2] - 1.0 / 3.0).abs() < 1e-15);

        let s = initial_state(&mech, 0.5, 1000.0, P_STD).unwrap();
        assert!((s.x[o2] / s.x[h2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mole_mass_round_trip_preserves_unit_sums() {
        let mech = Mechanism::builtin();
        let s = initial_state(&mech, 1.0, 1000.0, P_STD).unwrap();
        let y = s.mass_fractions(&mech);
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let x = mole_from_mass(&mech, &y).unwrap();
        for (a, b) in x.iter().zip(&s.x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn density_follows_the_perfect_gas_law() {
        let mech = Mechanism::builtin();
        let s = initial_state(&mech, 1.0, 1000.0, P_STD).unwrap();
        assert!((s.mean_weight(&mech) - 12.010186666666666).abs() < 1e-12);
        assert!((s.density(&mech) - 0.14636313213875757).abs() < 1e-12);
    }

    #[test]
    fn absent_reactants_give_zero_production() {
        // A lone H + O2 = O + OH reaction on a fresh H2/O2 mixture has
        // no H, O, or OH in either direction: production is exactly zero.
        let thermo = include_str!("../../data/thermo_h2o2.dat");
        let mech =
            Mechanism::parse(thermo, "H + O2 = O + OH ; 1.915e11 0.0 6.878496e7\n").unwrap();
        let s = initial_state(&mech, 1.0, 1000.0, P_STD).unwrap();
        let wdot = production_rates(&mech, &s).unwrap();
        assert!(wdot.iter().all(|&w| w == 0.0));

        // The full mechanism still freezes that reaction, while H2
        // dissociation runs.
        let mech = Mechanism::builtin();
        let h2 = mech.species_index("H2").unwrap();
        let s = initial_state(&mech, 1.0, 1000.0, P_STD).unwrap();
        let rates = rates_of_progress(&mech, &s).unwrap();
        assert_eq!(rates[0], (0.0, 0.0));
        assert!(rates[4].0 > 0.0);
        let wdot = production_rates(&mech, &s).unwrap();
        assert!(wdot[h2] < 0.0);
    }

    /// Element-potential equilibrium state: concentrations of the form
    /// C_j = (p0/(R_u T)) exp(sum_e lambda_e n_ej - g_j/(R_u T)) satisfy
    /// detailed balance for every element-conserving reversible reaction,
    /// whatever the lambda values.
    fn equilibrium_state(mech: &Mechanism, t: f64, lambda_h: f64, lambda_o: f64) -> MixtureState {
        let c: Vec<f64> = mech
            .species
            .iter()
            .map(|s| {
                let expo = lambda_h * f64::from(s.element_count("H"))
                    + lambda_o * f64::from(s.element_count("O"))
                    - s.thermo.g_rt(t);
                P_STD / (RU * t) * expo.exp()
            })
            .collect();
        let ctot: f64 = c.iter().sum();
        let x: Vec<f64> = c.iter().map(|c| c / ctot).collect();
        MixtureState::new(t, x, ctot * RU * t).unwrap()
    }

    #[test]
    fn equilibrium_composition_zeroes_every_net_rate() {
        let mech = Mechanism::builtin();
        let s = equilibrium_state(&mech, 1500.0, -14.0, -16.0);
        let rates = rates_of_progress(&mech, &s).unwrap();
        for (m, &(fwd, rev)) in rates.iter().enumerate() {
            assert!(
                (fwd - rev).abs() <= 1e-10 * fwd.max(rev),
                "reaction {m} ({}) unbalanced: {fwd} vs {rev}",
                mech.reactions[m].equation
            );
        }

        let wdot = production_rates(&mech, &s).unwrap();
        let scale: f64 = rates.iter().map(|&(f, r)| f + r).sum();
        for (j, w) in wdot.iter().enumerate() {
            assert!(
                w.abs() <= 1e-9 * scale,
                "species {j} produced at equilibrium: {w}"
            );
        }
    }

    #[test]
    fn production_rates_conserve_elements() {
        let mech = Mechanism::builtin();
        let x = vec![0.25, 0.15, 0.05, 0.1, 0.2, 0.05, 0.1, 0.1];
        let s = MixtureState::new(1200.0, x, P_STD).unwrap();
        let wdot = production_rates(&mech, &s).unwrap();
        for e in mech.elements() {
            let net: f64 = wdot
                .iter()
                .zip(&mech.species)
                .map(|(w, sp)| w * f64::from(sp.element_count(e)))
                .sum();
            let scale: f64 = wdot
                .iter()
                .zip(&mech.species)
                .map(|(w, sp)| (w * f64::from(sp.element_count(e))).abs())
                .sum();
            assert!(net.abs() <= 1e-12 * scale, "element {e}: net {net}");
        }
    }

    #[test]
    fn rhs_conserves_mass_and_enthalpy_identically() {
        let mech = Mechanism::builtin();
        let x = vec![0.25, 0.15, 0.05, 0.1, 0.2, 0.05, 0.1, 0.1];
        let s = MixtureState::new(1200.0, x, P_STD).unwrap();
        let (dydt, dtdt) = rhs(&mech, &s).unwrap();

        let scale: f64 = dydt.iter().map(|v| v.abs()).sum();
        assert!(dydt.iter().sum::<f64>().abs() <= 1e-12 * scale);

        let y = s.mass_fractions(&mech);
        let cp = cp_mass(&mech, s.t, &y);
        let h_flux: f64 = dydt
            .iter()
            .zip(&mech.species)
            .map(|(dy, sp)| dy * sp.thermo.h_rt(s.t) * RU * s.t / sp.weight)
            .sum();
        let scale = cp * dtdt.abs() + h_flux.abs();
        assert!(
            (cp * dtdt + h_flux).abs() <= 1e-12 * scale,
            "energy identity violated: {} vs {}",
            cp * dtdt,
            -h_flux
        );
    }

    #[test]
    fn rhs_vanishes_at_equilibrium() {
        let mech = Mechanism::builtin();
        let s = equilibrium_state(&mech, 1500.0, -14.0, -16.0);
        let (dydt, dtdt) = rhs(&mech, &s).unwrap();
        // Scale against the one-way fluxes converted to dY/dt units.
        let rates = rates_of_progress(&mech, &s).unwrap();
        let rho = s.density(&mech);
        let scale = rates.iter().map(|&(f, _)| f).sum::<f64>() * 30.0 / rho;
        for dy in &dydt {
            assert!(dy.abs() <= 1e-9 * scale);
        }
        let h_max = mech
            .species
            .iter()
            .map(|sp| (sp.thermo.h_rt(s.t) * RU * s.t / sp.weight).abs())
            .fold(0.0, f64::max);
        let y = s.mass_fractions(&mech);
        assert!(dtdt.abs() <= 1e-9 * scale * h_max / cp_mass(&mech, s.t, &y));
    }

    #[test]
    fn state_validation_rejects_bad_inputs() {
        assert!(MixtureState::new(-5.0, vec![1.0], P_STD).is_err());
        assert!(MixtureState::new(300.0, vec![0.5, 0.6], P_STD).is_err());
        assert!(MixtureState::new(300.0, vec![1.2, -0.2], P_STD).is_err());
        assert!(MixtureState::new(300.0, vec![1.0], 0.0).is_err());
        let mech = Mechanism::builtin();
        assert!(initial_state(&mech, 0.0, 1000.0, P_STD).is_err());
    }
}

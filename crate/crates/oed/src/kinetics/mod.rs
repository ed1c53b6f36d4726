//! Hydrogen-oxygen combustion exemplar.
//!
//! A spatially homogeneous, adiabatic, constant-pressure reacting
//! mixture: NASA-7 thermodynamics, a 19-reaction H2/O2 mechanism with
//! equilibrium-consistent reverse rates and third-body colliders, a
//! variable-order BDF integrator for the stiff governing equations, and
//! extraction of ignition-delay and radical-peak observables from the
//! computed trajectories.

pub mod gas;
pub mod mechanism;
pub mod observables;
pub mod stiff;
pub mod thermo;

pub use gas::{
    cp_mass, enthalpy_mass, initial_state, integrate, mole_from_mass, production_rates,
    rate_constants, rates_of_progress, rhs, MixtureState, P_STD, RU,
};
pub use mechanism::{Mechanism, Reaction, SpeciesData};
pub use observables::{extract_observables, ObservableSet, Trajectory};
pub use thermo::Nasa7;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_reaction_mechanism_keeps_the_state_constant() {
        let thermo = include_str!("../../data/thermo_h2o2.dat");
        let mech = Mechanism::parse(thermo, "# no reactions\n").unwrap();
        let state0 = initial_state(&mech, 1.0, 1000.0, P_STD).unwrap();
        let traj = integrate(&mech, &state0, 1e-3, 1e-8, 1e-12).unwrap();

        assert!(traj.n_nodes() >= 2);
        assert_eq!(*traj.t.last().unwrap(), 1e-3);
        let last = traj.n_nodes() - 1;
        assert!((traj.temperature[last] - 1000.0).abs() <= 1e-10);
        for (x, x0) in traj.x_at(last).iter().zip(&state0.x) {
            assert!((x - x0).abs() <= 1e-13);
        }
        assert_eq!(traj.clipped, 0);
    }

    #[test]
    fn first_order_decay_matches_the_analytic_solution() {
        let thermo = "\
species A 10.0 H:2 200.0 1000.0 3500.0
low  2.5 0.0 0.0 0.0 0.0 100.0 1.0
high 2.5 0.0 0.0 0.0 0.0 100.0 1.0
species B 10.0 H:2 200.0 1000.0 3500.0
low  2.5 0.0 0.0 0.0 0.0 100.0 1.0
high 2.5 0.0 0.0 0.0 0.0 100.0 1.0
";
        // Equal weights and identical thermo make the A -> B reactor
        // exactly linear: X_A(t) = exp(-k t) with k the rate constant.
        let mech = Mechanism::parse(thermo, "A -> B ; 1000.0 0.0 0.0\n").unwrap();
        let a = mech.species_index("A").unwrap();
        let state0 = MixtureState::new(1000.0, vec![1.0, 0.0], P_STD).unwrap();

        let rtol = 1e-8;
        let traj = integrate(&mech, &state0, 3e-3, rtol, 1e-14).unwrap();
        // Per-step error control lets the global error grow with the
        // step count, about 100 steps here, so the bound is 100 rtol.
        for (i, &t) in traj.t.iter().enumerate() {
            let exact = (-1000.0 * t).exp();
            let got = traj.x_at(i)[a];
            assert!(
                (got - exact).abs() <= 100.0 * rtol * exact.max(1e-6),
                "t = {t}: {got} vs {exact}"
            );
        }
        let last = traj.n_nodes() - 1;
        let exact = (-3.0f64).exp();
        assert!((traj.x_at(last)[a] - exact).abs() <= 100.0 * rtol * exact);
    }

    #[test]
    fn h2_o2_trajectory_conserves_enthalpy_and_elements() {
        let mech = Mechanism::builtin();
        let state0 = initial_state(&mech, 1.0, 1000.0, P_STD).unwrap();
        let rtol = 1e-8;
        let traj = integrate(&mech, &state0, 2e-3, rtol, 1e-12).unwrap();

        // The window must contain the ignition front to be a real test.
        let t_peak = traj.temperature.iter().cloned().fold(0.0, f64::max);
        assert!(t_peak > 2500.0, "no ignition: peak T = {t_peak}");

        let y0 = state0.mass_fractions(&mech);
        let h0 = enthalpy_mass(&mech, state0.t, &y0);
        let n0: Vec<f64> = mech
            .elements()
            .iter()
            .map(|e| {
                y0.iter()
                    .zip(&mech.species)
                    .map(|(y, s)| y / s.weight * f64::from(s.element_count(e)))
                    .sum()
            })
            .collect();

        for i in 0..traj.n_nodes() {
            let x = traj.x_at(i);
            let t = traj.temperature[i];
            let state = MixtureState::new(t, x.to_vec(), P_STD).unwrap();
            let y = state.mass_fractions(&mech);

            let h = enthalpy_mass(&mech, t, &y);
            assert!(
                ((h - h0) / h0).abs() < 1e-6,
                "enthalpy drift at node {i}: {h} vs {h0}"
            );
            for (e, n0e) in mech.elements().iter().zip(&n0) {
                let ne: f64 = y
                    .iter()
                    .zip(&mech.species)
                    .map(|(y, s)| y / s.weight * f64::from(s.element_count(e)))
                    .sum();
                assert!(
                    ((ne - n0e) / n0e).abs() < 10.0 * rtol,
                    "element {e} drift at node {i}: {ne} vs {n0e}"
                );
            }
        }
    }

    #[test]
    fn ignition_delay_decreases_with_initial_temperature() {
        let mech = Mechanism::builtin();
        let mut taus = Vec::new();
        for &t0 in &[900.0, 975.0, 1050.0] {
            let state0 = initial_state(&mech, 1.0, t0, P_STD).unwrap();
            let traj = integrate(&mech, &state0, 0.2, 1e-8, 1e-12).unwrap();
            let obs = extract_observables(&traj, &mech).unwrap();
            assert!(obs.peak_dhdt < 0.0);
            taus.push(obs.ln_tau_ign.exp());
        }
        assert!(
            taus[0] > taus[1] && taus[1] > taus[2],
            "ignition delays not decreasing: {taus:?}"
        );
    }

    #[test]
    fn radical_peaks_sit_near_ignition() {
        let mech = Mechanism::builtin();
        let state0 = initial_state(&mech, 1.0, 1050.0, P_STD).unwrap();
        let traj = integrate(&mech, &state0, 0.05, 1e-8, 1e-12).unwrap();
        let obs = extract_observables(&traj, &mech).unwrap();

        let tau = obs.ln_tau_ign.exp();
        for ln_tau in [obs.ln_tau_o, obs.ln_tau_h, obs.ln_tau_ho2, obs.ln_tau_h2o2] {
            let ratio = ln_tau.exp() / tau;
            assert!(
                (0.05..20.0).contains(&ratio),
                "radical peak far from ignition: ratio {ratio}"
            );
        }
        for peak in [obs.peak_x_o, obs.peak_x_h, obs.peak_x_ho2, obs.peak_x_h2o2] {
            assert!(peak > 0.0 && peak < 1.0);
        }
    }
}

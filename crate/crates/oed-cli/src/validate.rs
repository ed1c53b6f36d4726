//! Acceptance criteria: the checks the toolkit must pass before its
//! results are trusted, each pinned to fixed seeds, sample sizes, and
//! tolerances, and reported as a single pass/fail line.
//!
//! The criteria are self-contained: they build their own models and
//! configurations rather than reading files, so `oed validate` gives the
//! same verdict on every machine.

use std::path::{Path, PathBuf};

use rand::Rng;

use oed::dasq::{smolyak_fixed, DasqConfig, FnIntegrand};
use oed::eig::{argmax, bias_study, estimate_eig, grid_scan, BiasProtocol, EigConfig};
use oed::kahan::KahanSum;
use oed::kinetics::{
    enthalpy_mass, extract_observables, initial_state, integrate, rates_of_progress, rhs,
    Mechanism, MixtureState, P_STD, RU,
};
use oed::mcmc::{chain_stats, dr_log_accept_stage2, dram_run, model_log_posterior, DramConfig};
use oed::model::{
    sample_observation, BatchModel, DesignSpace, NoiseModel, SimpleModel, UniformPrior,
};
use oed::opt::{ensemble_run, nmns_run, spsa_run_tuned, EigObjective, EnsembleMember, NmnsConfig};
use oed::pce::{nisp_project, relative_l2_error, InputMap};
use oed::quad::{cc_rule, difference_rule, n_nodes};
use oed::rng::stream;

use crate::config::{
    BiasConfig, BoxConfig, CliError, EstimatorConfig, McmcConfig, ModelConfig, ModelKind,
    NoiseConfig, OptMethod, OptimizeConfig, RunConfig, ScanConfig, SurrogateConfig,
};
use crate::run::{run, Task};

/// Observation noise of the algebraic test model throughout.
const SIGMA: f64 = 0.01;

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Criterion {
    /// The one-line report the `validate` subcommand prints.
    pub fn line(&self) -> String {
        format!(
            "criterion {:02} {}: {} ({})",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

type CriterionFn = fn() -> Result<(bool, String), CliError>;

const CRITERIA: [(u32, &'static str, CriterionFn); 12] = [
    (1, "simple-scan-local-maxima", c01_scan_local_maxima),
    (2, "restricted-prior-argmax", c02_restricted_priors),
    (3, "two-experiment-grid-optimum", c03_two_experiment_grid),
    (4, "reuse-estimator-bias", c04_estimator_bias),
    (5, "eig-subadditivity", c05_subadditivity),
    (6, "quadrature-exactness", c06_quadrature_exactness),
    (7, "pce-convergence", c07_pce_convergence),
    (8, "surrogate-substitutability", c08_surrogate_substitutability),
    (9, "stochastic-optimization", c09_stochastic_optimization),
    (10, "mcmc-correctness", c10_mcmc_correctness),
    (11, "kinetics-invariants", c11_kinetics_invariants),
    (12, "artifact-determinism", c12_artifact_determinism),
];

/// Runs one criterion by number (1 through 12).
pub fn criterion(id: u32) -> Criterion {
    let (id, name, body) = CRITERIA
        .iter()
        .find(|(i, ..)| *i == id)
        .copied()
        .unwrap_or_else(|| panic!("no criterion {id}; valid ids are 1..=12"));
    run_one(id, name, body)
}

/// Runs the requested criteria in order, or all of them.
pub fn run_selected(ids: Option<&[u32]>) -> Result<Vec<Criterion>, CliError> {
    match ids {
        None => Ok(CRITERIA
            .iter()
            .map(|&(id, name, body)| run_one(id, name, body))
            .collect()),
        Some(selection) => selection
            .iter()
            .map(|want| {
                CRITERIA
                    .iter()
                    .find(|(id, ..)| id == want)
                    .map(|&(id, name, body)| run_one(id, name, body))
                    .ok_or_else(|| {
                        CliError::new(format!("no criterion {want}; valid ids are 1..=12"))
                    })
            })
            .collect(),
    }
}

fn run_one(id: u32, name: &'static str, body: CriterionFn) -> Criterion {
    match body() {
        Ok((passed, detail)) => Criterion { id, name, passed, detail },
        Err(e) => Criterion { id, name, passed: false, detail: format!("did not run: {e}") },
    }
}

fn pooled(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// The single-experiment scan has local maxima at d = 0.2 and d = 1.0,
/// each exceeding its grid neighbors by more than one pooled standard
/// error at n_out = n_in = 1e5.
fn c01_scan_local_maxima() -> Result<(bool, String), CliError> {
    const SEED: u64 = 42;
    const N: usize = 100_000;
    let prior = UniformPrior::unit(1);
    let noise = NoiseModel::constant(SIGMA);
    let space = DesignSpace::unit(1);
    let points = grid_scan(
        &SimpleModel,
        &prior,
        &noise,
        &space,
        &[101],
        &EigConfig::reuse(N),
        SEED,
    )?;

    let exceeds = |hi: usize, lo: usize| {
        points[hi].eig - points[lo].eig > pooled(points[hi].std_err, points[lo].std_err)
    };
    let peak_02 = exceeds(20, 19) && exceeds(20, 21);
    let peak_10 = exceeds(100, 99);
    let detail = format!(
        "U(0.20)={:.4} vs U(0.19)={:.4}/U(0.21)={:.4}; U(1.00)={:.4} vs U(0.99)={:.4}",
        points[20].eig, points[19].eig, points[21].eig, points[100].eig, points[99].eig
    );
    Ok((peak_02 && peak_10, detail))
}

/// Restricting the prior moves the scan argmax: U(0, 0.4373) prefers
/// d = 0.2 and U(0.4373, 1) prefers d = 1.0.
fn c02_restricted_priors() -> Result<(bool, String), CliError> {
    const SPLIT: f64 = 0.4373;
    const N: usize = 10_000;
    let noise = NoiseModel::constant(SIGMA);
    let space = DesignSpace::unit(1);
    let config = EigConfig::reuse(N);

    let low = UniformPrior::new(vec![0.0], vec![SPLIT])?;
    let low_points = grid_scan(&SimpleModel, &low, &noise, &space, &[21], &config, 42)?;
    let i_low = argmax(&low_points);

    let high = UniformPrior::new(vec![SPLIT], vec![1.0])?;
    let high_points = grid_scan(&SimpleModel, &high, &noise, &space, &[21], &config, 43)?;
    let i_high = argmax(&high_points);

    let detail = format!(
        "U(0,{SPLIT}) argmax d={}, U({SPLIT},1) argmax d={}",
        low_points[i_low].design[0], high_points[i_high].design[0]
    );
    Ok((i_low == 4 && i_high == 20, detail))
}

/// The two-experiment grid optimum is the unordered pair {0.2, 1.0}
/// within one grid cell, and the scan table is symmetric under swapping
/// the two experiments within 3 pooled standard errors.
fn c03_two_experiment_grid() -> Result<(bool, String), CliError> {
    const SEED: u64 = 42;
    const N: usize = 10_000;
    const M: usize = 21;
    const CELL: f64 = 0.05;
    let model = BatchModel::new(SimpleModel, 2);
    let prior = UniformPrior::unit(1);
    let noise = NoiseModel::constant(SIGMA);
    let space = DesignSpace::unit(2);
    let points = grid_scan(&model, &prior, &noise, &space, &[M, M], &EigConfig::reuse(N), SEED)?;

    let best = &points[argmax(&points)];
    let mut pair = best.design.clone();
    pair.sort_by(f64::total_cmp);
    let pair_ok = (pair[0] - 0.2).abs() <= CELL + 1e-12 && (pair[1] - 1.0).abs() <= CELL + 1e-12;

    let mut worst = 0.0f64;
    for i in 0..M {
        for j in (i + 1)..M {
            let a = &points[i * M + j];
            let b = &points[j * M + i];
            let ratio = (a.eig - b.eig).abs() / (3.0 * pooled(a.std_err, b.std_err));
            worst = worst.max(ratio);
        }
    }
    let detail = format!(
        "argmax ({}, {}), worst symmetry gap {:.2} of the 3-sigma limit",
        best.design[0], best.design[1], worst
    );
    Ok((pair_ok && worst <= 1.0, detail))
}

/// The reuse estimator's bias at d = 0.2 is at most 1% of a resampled
/// n_in = 1e6 reference at n_in = 1e3, and shrinks by at least 5x from
/// n_in = 1e3 to 1e4. Both studies spend 1e6 outer samples per point.
fn c04_estimator_bias() -> Result<(bool, String), CliError> {
    let prior = UniformPrior::unit(1);
    let noise = NoiseModel::constant(SIGMA);
    let design = [0.2];

    let curve = bias_study(
        &SimpleModel,
        &prior,
        &noise,
        &design,
        &BiasProtocol {
            n_ins: vec![1_000, 10_000],
            reuse: true,
            total_outer: 1_000_000,
            n_out: None,
        },
        42,
    )?;
    let reference = bias_study(
        &SimpleModel,
        &prior,
        &noise,
        &design,
        &BiasProtocol {
            n_ins: vec![1_000_000],
            reuse: false,
            total_outer: 1_000_000,
            n_out: Some(1_000_000),
        },
        43,
    )?;

    let r = reference[0].mean;
    let bias_1e3 = (curve[0].mean - r).abs();
    let bias_1e4 = (curve[1].mean - r).abs();
    let detail = format!(
        "reference {:.6}; |bias| {:.5} ({:.2}% of reference) at n_in=1e3, {:.5} ({:.1}x smaller) at 1e4",
        r,
        bias_1e3,
        100.0 * bias_1e3 / r,
        bias_1e4,
        bias_1e3 / bias_1e4
    );
    Ok((bias_1e3 <= 0.01 * r && bias_1e3 >= 5.0 * bias_1e4, detail))
}

/// A two-experiment EIG never exceeds the sum of its single-experiment
/// EIGs by more than 3 pooled standard errors, at 10 random pairs.
fn c05_subadditivity() -> Result<(bool, String), CliError> {
    const SEED: u64 = 45;
    const N: usize = 10_000;
    let pair_model = BatchModel::new(SimpleModel, 2);
    let prior = UniformPrior::unit(1);
    let noise = NoiseModel::constant(SIGMA);
    let config = EigConfig::reuse(N);

    let mut rng = stream(SEED, 0);
    let mut worst_excess = f64::NEG_INFINITY;
    for k in 0..10u64 {
        let d1: f64 = rng.random();
        let d2: f64 = rng.random();
        let joint = estimate_eig(
            &pair_model,
            &prior,
            &noise,
            &[d1, d2],
            &config,
            &mut stream(SEED, 3 * k + 1),
        )?;
        let one = estimate_eig(&SimpleModel, &prior, &noise, &[d1], &config, &mut stream(SEED, 3 * k + 2))?;
        let two = estimate_eig(&SimpleModel, &prior, &noise, &[d2], &config, &mut stream(SEED, 3 * k + 3))?;
        let slack = 3.0
            * (joint.std_err.powi(2) + one.std_err.powi(2) + two.std_err.powi(2)).sqrt();
        worst_excess = worst_excess.max(joint.eig - one.eig - two.eig - slack);
    }
    let detail = format!("worst excess over the subadditive bound {worst_excess:.4} nats");
    Ok((worst_excess <= 0.0, detail))
}

/// Clenshaw-Curtis rules integrate every monomial they should exactly,
/// and budget-free adaptive quadrature restricted to Smolyak index sets
/// reproduces a directly assembled Smolyak sum.
fn c06_quadrature_exactness() -> Result<(bool, String), CliError> {
    let mut worst_cc = 0.0f64;
    for level in 2..=8usize {
        let rule = cc_rule(level);
        for k in 0..n_nodes(level) {
            let exact = if k % 2 == 1 { 0.0 } else { 1.0 / (k as f64 + 1.0) };
            let got = rule.integrate(|x| x.powi(k as i32));
            worst_cc = worst_cc.max((got - exact).abs());
        }
    }

    const LEVEL: u32 = 5;
    let family = FnIntegrand::new(3, 1, |x: &[f64], out: &mut [f64]| {
        out[0] = (x[0] + x[1] + x[2]).exp();
        Ok(())
    });
    let fixed = smolyak_fixed(&family, LEVEL)?;

    let mut direct = KahanSum::new();
    let bound = LEVEL as usize + 2;
    for k1 in 1..=bound {
        for k2 in 1..=bound {
            for k3 in 1..=bound {
                if k1 + k2 + k3 > bound {
                    continue;
                }
                let (r1, r2, r3) = (difference_rule(k1), difference_rule(k2), difference_rule(k3));
                for (&x1, &w1) in r1.nodes.iter().zip(&r1.weights) {
                    for (&x2, &w2) in r2.nodes.iter().zip(&r2.weights) {
                        for (&x3, &w3) in r3.nodes.iter().zip(&r3.weights) {
                            direct.add(w1 * w2 * w3 * (x1 + x2 + x3).exp());
                        }
                    }
                }
            }
        }
    }
    let gap = (fixed.integrals[0] - direct.value()).abs();

    let detail = format!("worst CC moment error {worst_cc:.2e}, Smolyak assembly gap {gap:.2e}");
    Ok((worst_cc <= 1e-12 && gap <= 1e-12, detail))
}

/// Surrogate L2 error falls monotonically over p in {2,4,6,8} with a
/// 1e4-node budget and ends below 1e-4; with a 200-node budget the p = 8
/// error exceeds the p = 4 error (aliasing regime).
fn c07_pce_convergence() -> Result<(bool, String), CliError> {
    const REF_LEVEL: u32 = 10;
    let map = InputMap::new(vec![0.0, 0.0], vec![1.0, 1.0])?;

    let roomy = DasqConfig { tol: 1e-12, max_evals: 10_000 };
    let mut errors = Vec::new();
    for order in [2u32, 4, 6, 8] {
        let (expansion, _) = nisp_project(&SimpleModel, &map, order, &roomy)?;
        errors.push(relative_l2_error(&SimpleModel, &expansion, REF_LEVEL)?[0]);
    }
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let tail_ok = errors[3] < 1e-4;

    let starved = DasqConfig { tol: 1e-12, max_evals: 200 };
    let (p4, _) = nisp_project(&SimpleModel, &map, 4, &starved)?;
    let (p8, _) = nisp_project(&SimpleModel, &map, 8, &starved)?;
    let starved_4 = relative_l2_error(&SimpleModel, &p4, REF_LEVEL)?[0];
    let starved_8 = relative_l2_error(&SimpleModel, &p8, REF_LEVEL)?[0];
    let aliasing = starved_8 > starved_4;

    let detail = format!(
        "errors at 1e4 evals {:?}; at 200 evals p=4 {:.3e}, p=8 {:.3e}",
        errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
        starved_4,
        starved_8
    );
    Ok((monotone && tail_ok && aliasing, detail))
}

/// Scanning with the p = 8 surrogate picks the same grid argmax as
/// scanning the model itself.
fn c08_surrogate_substitutability() -> Result<(bool, String), CliError> {
    const SEED: u64 = 42;
    const N: usize = 100_000;
    let prior = UniformPrior::unit(1);
    let noise = NoiseModel::constant(SIGMA);
    let space = DesignSpace::unit(1);
    let config = EigConfig::reuse(N);

    let full = grid_scan(&SimpleModel, &prior, &noise, &space, &[101], &config, SEED)?;

    let map = InputMap::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    let (surrogate, _) = nisp_project(
        &SimpleModel,
        &map,
        8,
        &DasqConfig { tol: 1e-12, max_evals: 10_000 },
    )?;
    let scanned = grid_scan(&surrogate, &prior, &noise, &space, &[101], &config, SEED)?;

    let i_full = argmax(&full);
    let i_surr = argmax(&scanned);
    let detail = format!(
        "full argmax d={}, surrogate argmax d={}",
        full[i_full].design[0], scanned[i_surr].design[0]
    );
    Ok((i_full == i_surr, detail))
}

/// With a 1e4-evaluation budget and a reuse(10) objective, at least 70
/// of 100 NMNS restarts re-score within 5% of the two-experiment grid
/// optimum, and an SPSA ensemble lands a nonempty cluster in that band.
fn c09_stochastic_optimization() -> Result<(bool, String), CliError> {
    const SEED_GRID: u64 = 42;
    const SEED_NMNS: u64 = 46;
    const SEED_SPSA: u64 = 47;
    const BUDGET: usize = 10_000;
    let model = BatchModel::new(SimpleModel, 2);
    let prior = UniformPrior::unit(1);
    let noise = NoiseModel::constant(SIGMA);
    let space = DesignSpace::unit(2);

    let grid = grid_scan(
        &model,
        &prior,
        &noise,
        &space,
        &[21, 21],
        &EigConfig::reuse(10_000),
        SEED_GRID,
    )?;
    let u_star = grid[argmax(&grid)].eig;

    let objective = EigObjective {
        model: &model,
        prior: &prior,
        noise: noise.clone(),
        config: EigConfig::reuse(10),
    };
    let rescore = |design: &[f64], seed: u64| {
        let est = estimate_eig(
            &model,
            &prior,
            &noise,
            design,
            &EigConfig::reuse(10_000),
            &mut stream(seed, 0),
        )?;
        Ok((est.eig, est.std_err))
    };
    let in_band =
        |m: &&EnsembleMember| (m.score_hq - u_star).abs() <= 0.05 * u_star;

    let nmns = ensemble_run(
        &space,
        100,
        |x0, seed| nmns_run(&objective, &space, x0, &NmnsConfig::with_budget(BUDGET), seed),
        &rescore,
        SEED_NMNS,
    )?;
    let nmns_good = nmns.iter().filter(in_band).count();

    let spsa = ensemble_run(
        &space,
        20,
        |x0, seed| spsa_run_tuned(&objective, &space, x0, BUDGET, seed),
        &rescore,
        SEED_SPSA,
    )?;
    let spsa_good = spsa.iter().filter(in_band).count();

    let detail = format!(
        "grid optimum {u_star:.4}; NMNS {nmns_good}/100 within 5%, SPSA {spsa_good}/20"
    );
    Ok((nmns_good >= 70 && spsa_good >= 1, detail))
}

/// DRAM recovers a standard normal, preserves detailed balance on a
/// discrete target, and matches a dense-grid posterior mean on the
/// algebraic model at d = 0.2.
fn c10_mcmc_correctness() -> Result<(bool, String), CliError> {
    let normal = |x: &[f64]| -0.5 * x[0] * x[0];
    let chain = dram_run(&normal, &[0.0], &DramConfig::diagonal(&[1.0]), 125_000, &mut stream(48, 0))?;
    let stats = chain_stats(&chain, 25_000, 1)?;
    let mean = stats.mean[0];
    let var = stats.cov[0];
    let normal_ok = mean.abs() <= 0.02 && (0.95..=1.05).contains(&var);

    let balance_z = discrete_balance_worst_z();
    let balance_ok = balance_z <= 3.0;

    let prior = UniformPrior::unit(1);
    let noise = NoiseModel::constant(SIGMA);
    let design = [0.2];
    let mut y = vec![0.0];
    sample_observation(&SimpleModel, &noise, &[0.5], &design, &mut stream(49, 0), &mut y)?;
    let log_posterior = model_log_posterior(&SimpleModel, &prior, &noise, &design, &y);
    let posterior_chain = dram_run(
        &log_posterior,
        &[0.5],
        &DramConfig::diagonal(&[0.01]),
        60_000,
        &mut stream(49, 1),
    )?;
    let posterior_stats = chain_stats(&posterior_chain, 12_000, 1)?;
    let grid_mean = dense_grid_posterior_mean(&log_posterior);
    let gap = (posterior_stats.mean[0] - grid_mean).abs();
    let posterior_ok = gap <= 0.05;

    let detail = format!(
        "N(0,1) mean {mean:.4} var {var:.4}; balance worst z {balance_z:.2}; posterior mean gap {gap:.4}"
    );
    Ok((normal_ok && balance_ok && posterior_ok, detail))
}

/// Worst standardized detailed-balance violation of the two-stage
/// kernel on a three-state target, over all state pairs.
fn discrete_balance_worst_z() -> f64 {
    let pi = [0.6f64, 0.3, 0.1];
    let lp = |s: usize| pi[s].ln();
    let others = |s: usize| -> [usize; 2] {
        match s {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    };
    let mut rng = stream(31, 0);
    let mut x = 0usize;
    let n_steps = 1_000_000usize;
    let mut counts = [[0usize; 3]; 3];
    for _ in 0..n_steps {
        let y1 = others(x)[rng.random_range(0..2)];
        let la1 = (lp(y1) - lp(x)).min(0.0);
        let next = if rng.random::<f64>().ln() < la1 {
            y1
        } else {
            let y2 = others(x)[rng.random_range(0..2)];
            let la2 = dr_log_accept_stage2(lp(x), lp(y1), lp(y2), 0.5f64.ln(), 0.5f64.ln());
            if rng.random::<f64>().ln() < la2 {
                y2
            } else {
                x
            }
        };
        counts[x][next] += 1;
        x = next;
    }

    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..i {
            let n_i: usize = counts[i].iter().sum();
            let n_j: usize = counts[j].iter().sum();
            let p_ij = counts[i][j] as f64 / n_i as f64;
            let p_ji = counts[j][i] as f64 / n_j as f64;
            let flow_ij = pi[i] * p_ij;
            let flow_ji = pi[j] * p_ji;
            let se = (pi[i] * pi[i] * p_ij * (1.0 - p_ij) / n_i as f64
                + pi[j] * pi[j] * p_ji * (1.0 - p_ji) / n_j as f64)
                .sqrt();
            worst = worst.max((flow_ij - flow_ji).abs() / se);
        }
    }
    worst
}

/// Posterior mean on [0, 1] by a 20001-node trapezoid rule over the
/// unnormalized log posterior.
fn dense_grid_posterior_mean(log_posterior: &impl Fn(&[f64]) -> f64) -> f64 {
    const M: usize = 20_001;
    let values: Vec<f64> = (0..M)
        .map(|i| log_posterior(&[i as f64 / (M - 1) as f64]))
        .collect();
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut mass = KahanSum::new();
    let mut first_moment = KahanSum::new();
    for (i, lp) in values.iter().enumerate() {
        let w = if i == 0 || i == M - 1 { 0.5 } else { 1.0 };
        let p = (lp - peak).exp();
        mass.add(w * p);
        first_moment.add(w * p * i as f64 / (M - 1) as f64);
    }
    first_moment.value() / mass.value()
}

/// Kinetics invariants along real trajectories: element and enthalpy
/// conservation, pointwise mass-consistent rates, detailed balance at
/// an equilibrium composition, and a falling ignition-delay trend.
fn c11_kinetics_invariants() -> Result<(bool, String), CliError> {
    const RTOL: f64 = 1e-8;
    const ATOL: f64 = 1e-12;
    let mech = Mechanism::builtin();

    let state0 = initial_state(&mech, 1.0, 1000.0, P_STD)?;
    let trajectory = integrate(&mech, &state0, 2e-3, RTOL, ATOL)?;
    let y0 = state0.mass_fractions(&mech);
    let h0 = enthalpy_mass(&mech, state0.t, &y0);
    let elements0: Vec<f64> = mech
        .elements()
        .iter()
        .map(|e| {
            y0.iter()
                .zip(&mech.species)
                .map(|(y, s)| y / s.weight * f64::from(s.element_count(e)))
                .sum()
        })
        .collect();

    let mut element_drift = 0.0f64;
    let mut enthalpy_drift = 0.0f64;
    let mut rate_sum = 0.0f64;
    for node in 0..trajectory.n_nodes() {
        let state = MixtureState::new(
            trajectory.temperature[node],
            trajectory.x_at(node).to_vec(),
            P_STD,
        )?;
        let y = state.mass_fractions(&mech);
        enthalpy_drift = enthalpy_drift
            .max(((enthalpy_mass(&mech, state.t, &y) - h0) / h0).abs());
        for (e, n0) in mech.elements().iter().zip(&elements0) {
            let n: f64 = y
                .iter()
                .zip(&mech.species)
                .map(|(y, s)| y / s.weight * f64::from(s.element_count(e)))
                .sum();
            element_drift = element_drift.max(((n - n0) / n0).abs());
        }
        let (dydt, _) = rhs(&mech, &state)?;
        let scale: f64 = dydt.iter().map(|v| v.abs()).sum();
        if scale > 0.0 {
            rate_sum = rate_sum.max(dydt.iter().sum::<f64>().abs() / scale);
        }
    }
    let conservation_ok =
        element_drift <= 10.0 * RTOL && enthalpy_drift <= 1e-6 && rate_sum <= 1e-12;

    // Element-potential composition: C_j proportional to
    // exp(sum_e lambda_e n_ej - g_j(T)), which balances every
    // element-conserving reversible reaction regardless of the lambdas.
    let t_eq = 1500.0;
    let (lambda_h, lambda_o) = (-14.0, -16.0);
    let concentrations: Vec<f64> = mech
        .species
        .iter()
        .map(|s| {
            let exponent = lambda_h * f64::from(s.element_count("H"))
                + lambda_o * f64::from(s.element_count("O"))
                - s.thermo.g_rt(t_eq);
            P_STD / (RU * t_eq) * exponent.exp()
        })
        .collect();
    let total: f64 = concentrations.iter().sum();
    let x_eq: Vec<f64> = concentrations.iter().map(|c| c / total).collect();
    let equilibrium = MixtureState::new(t_eq, x_eq, total * RU * t_eq)?;
    let mut balance_gap = 0.0f64;
    for &(forward, reverse) in &rates_of_progress(&mech, &equilibrium)? {
        balance_gap = balance_gap.max((forward - reverse).abs() / forward.max(reverse));
    }
    let balance_ok = balance_gap <= 1e-10;

    let mut delays = Vec::new();
    for &t0 in &[900.0, 975.0, 1050.0] {
        let state0 = initial_state(&mech, 1.0, t0, P_STD)?;
        let trajectory = integrate(&mech, &state0, 0.2, RTOL, ATOL)?;
        delays.push(extract_observables(&trajectory, &mech)?.ln_tau_ign.exp());
    }
    let trend_ok = delays[0] > delays[1] && delays[1] > delays[2];

    let detail = format!(
        "element drift {element_drift:.1e}, enthalpy drift {enthalpy_drift:.1e}, rate sum {rate_sum:.1e}, balance gap {balance_gap:.1e}, delays {:?} s",
        delays.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>()
    );
    Ok((conservation_ok && balance_ok && trend_ok, detail))
}

/// Every subcommand writes byte-identical artifacts when re-run with the
/// same config and seed at a different worker count.
fn c12_artifact_determinism() -> Result<(bool, String), CliError> {
    let scratch = tempfile::tempdir()?;
    let first = collect_artifacts(&scratch.path().join("a"), 1)?;
    let second = collect_artifacts(&scratch.path().join("b"), 4)?;

    let names_match = first.len() == second.len()
        && first.iter().zip(&second).all(|(a, b)| a.0 == b.0);
    let bytes_match =
        names_match && first.iter().zip(&second).all(|(a, b)| a.1 == b.1);
    let detail = format!(
        "{} files from 5 subcommands, 1 vs 4 workers: {}",
        first.len(),
        if bytes_match { "byte-identical" } else { "MISMATCH" }
    );
    Ok((bytes_match, detail))
}

/// Runs one small study per subcommand inside a pool of the given size
/// and returns (relative name, bytes) for every artifact, in run order.
fn collect_artifacts(root: &Path, threads: usize) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::new(format!("worker pool: {e}")))?;
    pool.install(|| {
        let mut artifacts = Vec::new();
        for (task, config) in small_studies(root) {
            for path in run(task, &config)? {
                let name = path
                    .strip_prefix(root)
                    .unwrap_or(&path)
                    .to_string_lossy()
                    .into_owned();
                artifacts.push((name, std::fs::read(&path)?));
            }
        }
        Ok(artifacts)
    })
}

/// One fast study per artifact-producing subcommand, all on the
/// algebraic model with unit boxes.
fn small_studies(root: &Path) -> Vec<(Task, RunConfig)> {
    let base = |output: PathBuf| RunConfig {
        seed: 7,
        output: Some(output),
        model: ModelConfig { kind: ModelKind::Simple, experiments: 1, expansion: None },
        prior: Some(BoxConfig { lo: vec![0.0], hi: vec![1.0] }),
        noise: Some(NoiseConfig { sigma: SIGMA }),
        design: Some(BoxConfig { lo: vec![0.0], hi: vec![1.0] }),
        estimator: None,
        scan: None,
        optimize: None,
        surrogate: None,
        mcmc: None,
        bias: None,
    };

    let mut scan = base(root.join("scan"));
    scan.estimator = Some(EstimatorConfig { n_out: 200, n_in: 200, reuse: true });
    scan.scan = Some(ScanConfig { nodes: vec![11] });

    let mut bias = base(root.join("bias"));
    bias.bias = Some(BiasConfig {
        design: vec![0.2],
        n_in: vec![50, 100],
        reuse: true,
        total_outer: 2_000,
        n_out: None,
    });

    let mut optimize = base(root.join("optimize"));
    optimize.optimize = Some(OptimizeConfig {
        method: OptMethod::Nmns,
        budget: 300,
        runs: 4,
        n_objective: 10,
        n_rescore: 500,
    });

    let mut surrogate = base(root.join("surrogate"));
    surrogate.surrogate = Some(SurrogateConfig {
        order: 3,
        tol: 1e-10,
        max_evals: 300,
        check_level: 5,
    });

    let mut infer = base(root.join("infer"));
    infer.mcmc = Some(McmcConfig {
        steps: 3_000,
        burn_in: None,
        thin: 1,
        proposal_sd: vec![0.1],
        design: vec![0.2],
        theta_true: Some(vec![0.5]),
        y: None,
        grid: None,
    });

    vec![
        (Task::Scan, scan),
        (Task::Bias, bias),
        (Task::Optimize, optimize),
        (Task::Surrogate, surrogate),
        (Task::Infer, infer),
    ]
}

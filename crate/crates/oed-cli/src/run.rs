//! Subcommand drivers: build the study pieces from a config, call the
//! library, write artifacts.

use std::path::{Path, PathBuf};

use oed::dasq::DasqConfig;
use oed::eig::{estimate_eig, grid_scan, bias_study, BiasProtocol, EigConfig};
use oed::mcmc::{dram_run, model_log_posterior, posterior_grid, DramConfig};
use oed::model::{
    sample_observation, BatchModel, DesignSpace, ForwardModel, NoiseModel, SimpleModel,
    UniformPrior,
};
use oed::opt::{ensemble_run, nmns_run, spsa_run_tuned, EigObjective, NmnsConfig, OptRun};
use oed::pce::{from_text, nisp_project, to_text, InputMap, PcExpansion};
use oed::rng::{stream, subseed};
use oed::Result as OedResult;

use crate::artifact::{fmt, numbered, Artifact};
use crate::config::{CliError, ModelKind, OptMethod, RunConfig};

/// The artifact-producing subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Scan,
    Optimize,
    Surrogate,
    Infer,
    Bias,
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(task: Task, config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let dir = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("artifacts"));
    match task {
        Task::Scan => run_scan(config, &dir),
        Task::Optimize => run_optimize(config, &dir),
        Task::Surrogate => run_surrogate(config, &dir),
        Task::Infer => run_infer(config, &dir),
        Task::Bias => run_bias(config, &dir),
    }
}

/// The forward model named by the config. Library entry points take
/// `impl ForwardModel`, so the choice is dispatched through one enum
/// instead of a trait object.
pub enum ModelChoice {
    Simple(SimpleModel),
    SimpleBatch(BatchModel<SimpleModel>),
    Pce(Box<PcExpansion>),
    PceBatch(Box<BatchModel<PcExpansion>>),
}

impl ForwardModel for ModelChoice {
    fn n_theta(&self) -> usize {
        match self {
            ModelChoice::Simple(m) => m.n_theta(),
            ModelChoice::SimpleBatch(m) => m.n_theta(),
            ModelChoice::Pce(m) => m.n_theta(),
            ModelChoice::PceBatch(m) => m.n_theta(),
        }
    }

    fn n_design(&self) -> usize {
        match self {
            ModelChoice::Simple(m) => m.n_design(),
            ModelChoice::SimpleBatch(m) => m.n_design(),
            ModelChoice::Pce(m) => m.n_design(),
            ModelChoice::PceBatch(m) => m.n_design(),
        }
    }

    fn n_y(&self) -> usize {
        match self {
            ModelChoice::Simple(m) => m.n_y(),
            ModelChoice::SimpleBatch(m) => m.n_y(),
            ModelChoice::Pce(m) => m.n_y(),
            ModelChoice::PceBatch(m) => m.n_y(),
        }
    }

    fn eval(&self, theta: &[f64], design: &[f64], out: &mut [f64]) -> OedResult<()> {
        match self {
            ModelChoice::Simple(m) => m.eval(theta, design, out),
            ModelChoice::SimpleBatch(m) => m.eval(theta, design, out),
            ModelChoice::Pce(m) => m.eval(theta, design, out),
            ModelChoice::PceBatch(m) => m.eval(theta, design, out),
        }
    }
}

pub fn build_model(config: &RunConfig) -> Result<ModelChoice, CliError> {
    let batch = config.model.experiments;
    match config.model.kind {
        ModelKind::Simple => Ok(if batch == 1 {
            ModelChoice::Simple(SimpleModel)
        } else {
            ModelChoice::SimpleBatch(BatchModel::new(SimpleModel, batch))
        }),
        ModelKind::Pce => {
            let path = config
                .model
                .expansion
                .as_ref()
                .expect("validated: pce model has an expansion path");
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::new(format!("reading {}: {e}", path.display())))?;
            let expansion = from_text(&text)
                .map_err(|e| CliError::new(format!("expansion {}: {e}", path.display())))?;
            Ok(if batch == 1 {
                ModelChoice::Pce(Box::new(expansion))
            } else {
                ModelChoice::PceBatch(Box::new(BatchModel::new(expansion, batch)))
            })
        }
    }
}

fn section<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| CliError::new(format!("config section [{name}] is required here")))
}

fn build_prior(config: &RunConfig, model: &ModelChoice) -> Result<UniformPrior, CliError> {
    let b = section(&config.prior, "prior")?;
    if b.lo.len() != model.n_theta() {
        return Err(CliError::new(format!(
            "[prior]: box has {} dimensions, model has {} parameters",
            b.lo.len(),
            model.n_theta()
        )));
    }
    Ok(UniformPrior::new(b.lo.clone(), b.hi.clone())?)
}

fn build_noise(config: &RunConfig) -> Result<NoiseModel, CliError> {
    let n = section(&config.noise, "noise")?;
    Ok(NoiseModel::constant(n.sigma))
}

fn build_space(config: &RunConfig, model: &ModelChoice) -> Result<DesignSpace, CliError> {
    let b = section(&config.design, "design")?;
    if b.lo.len() != model.n_design() {
        return Err(CliError::new(format!(
            "[design]: box has {} dimensions, model has {} design variables",
            b.lo.len(),
            model.n_design()
        )));
    }
    Ok(DesignSpace::new(b.lo.clone(), b.hi.clone())?)
}

fn build_estimator(config: &RunConfig) -> Result<EigConfig, CliError> {
    let e = section(&config.estimator, "estimator")?;
    Ok(EigConfig { n_out: e.n_out, n_in: e.n_in, reuse: e.reuse })
}

fn run_scan(config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let model = build_model(config)?;
    let prior = build_prior(config, &model)?;
    let noise = build_noise(config)?;
    let space = build_space(config, &model)?;
    let estimator = build_estimator(config)?;
    let scan = section(&config.scan, "scan")?;

    let points = grid_scan(
        &model,
        &prior,
        &noise,
        &space,
        &scan.nodes,
        &estimator,
        config.seed,
    )?;

    let json = config.provenance_json();
    let mut a = Artifact::new(dir, "scan.csv", config.seed, &json);
    let mut header = numbered("d", space.dim());
    header.extend(["eig", "std_err", "n_out", "n_in"].map(String::from));
    a.row(header);
    for p in &points {
        let mut row: Vec<String> = p.design.iter().map(|v| fmt(*v)).collect();
        row.push(fmt(p.eig));
        row.push(fmt(p.std_err));
        row.push(estimator.n_out.to_string());
        row.push(estimator.n_in.to_string());
        a.row(row);
    }
    Ok(vec![a.finish()?])
}

fn run_bias(config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let model = build_model(config)?;
    let prior = build_prior(config, &model)?;
    let noise = build_noise(config)?;
    let bias = section(&config.bias, "bias")?;

    let protocol = BiasProtocol {
        n_ins: bias.n_in.clone(),
        reuse: bias.reuse,
        total_outer: bias.total_outer,
        n_out: bias.n_out,
    };
    let points = bias_study(&model, &prior, &noise, &bias.design, &protocol, config.seed)?;

    let json = config.provenance_json();
    let mut a = Artifact::new(dir, "bias.csv", config.seed, &json);
    a.row(["n_in", "reuse", "mean", "std", "replications"]);
    for p in &points {
        a.row([
            p.n_in.to_string(),
            p.reuse.to_string(),
            fmt(p.mean),
            fmt(p.std_err),
            p.replications.to_string(),
        ]);
    }
    Ok(vec![a.finish()?])
}

fn run_optimize(config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let model = build_model(config)?;
    let prior = build_prior(config, &model)?;
    let noise = build_noise(config)?;
    let space = build_space(config, &model)?;
    let opt = section(&config.optimize, "optimize")?;

    let objective = EigObjective {
        model: &model,
        prior: &prior,
        noise: noise.clone(),
        config: EigConfig::reuse(opt.n_objective),
    };
    let optimize = |x0: &[f64], seed: u64| -> OedResult<OptRun> {
        match opt.method {
            OptMethod::Nmns => {
                nmns_run(&objective, &space, x0, &NmnsConfig::with_budget(opt.budget), seed)
            }
            OptMethod::Spsa => spsa_run_tuned(&objective, &space, x0, opt.budget, seed),
        }
    };
    let rescore = |design: &[f64], seed: u64| -> OedResult<(f64, f64)> {
        let est = estimate_eig(
            &model,
            &prior,
            &noise,
            design,
            &EigConfig::reuse(opt.n_rescore),
            &mut stream(seed, 0),
        )?;
        Ok((est.eig, est.std_err))
    };
    let members = ensemble_run(&space, opt.runs, &optimize, &rescore, config.seed)?;

    let json = config.provenance_json();
    let mut ensemble = Artifact::new(dir, "ensemble.csv", config.seed, &json);
    let mut header = vec!["run".to_string()];
    header.extend(numbered("d", space.dim()));
    header.extend(["eig_hq", "stderr_hq"].map(String::from));
    ensemble.row(header);
    for m in &members {
        let mut row = vec![m.run.to_string()];
        row.extend(m.design.iter().map(|v| fmt(*v)));
        row.push(fmt(m.score_hq));
        row.push(fmt(m.std_err_hq));
        ensemble.row(row);
    }

    // Replay the best member with its own seeds to recover the trace the
    // ensemble discarded.
    let best = members
        .iter()
        .max_by(|a, b| a.score_hq.total_cmp(&b.score_hq))
        .expect("runs >= 1 was validated");
    let mut x0 = vec![0.0; space.dim()];
    space.sample(&mut stream(config.seed, best.run as u64), &mut x0);
    let replay = optimize(&x0, subseed(config.seed, best.run as u64))?;

    let mut trace = Artifact::new(dir, "trace.csv", config.seed, &json);
    let mut header = vec!["k".to_string(), "evals".to_string()];
    header.extend(numbered("d", space.dim()));
    header.push("score".to_string());
    trace.row(header);
    for r in &replay.trace {
        let mut row = vec![r.k.to_string(), r.evals.to_string()];
        row.extend(r.design.iter().map(|v| fmt(*v)));
        row.push(fmt(r.score));
        trace.row(row);
    }

    Ok(vec![ensemble.finish()?, trace.finish()?])
}

fn run_surrogate(config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let model = build_model(config)?;
    let prior = build_prior(config, &model)?;
    let space = build_space(config, &model)?;
    let sur = section(&config.surrogate, "surrogate")?;

    let mut lo = prior.lo().to_vec();
    lo.extend_from_slice(space.lo());
    let mut hi = prior.hi().to_vec();
    hi.extend_from_slice(space.hi());
    let map = InputMap::new(lo, hi)?;

    let dasq_config = DasqConfig { tol: sur.tol, max_evals: sur.max_evals };
    let (expansion, quadrature) = nisp_project(&model, &map, sur.order, &dasq_config)?;

    let json = config.provenance_json();
    let mut exp = Artifact::new(dir, "expansion.txt", config.seed, &json);
    exp.raw(&to_text(&expansion));

    let errors = oed::pce::relative_l2_error(&model, &expansion, sur.check_level)?;
    let mut l2 = Artifact::new(dir, "l2.csv", config.seed, &json);
    l2.row(["output", "rel_l2_sq"]);
    for (j, e) in errors.iter().enumerate() {
        l2.row([j.to_string(), fmt(*e)]);
    }

    let mut idx = Artifact::new(dir, "indices.csv", config.seed, &json);
    let dim = map.dim();
    let mut header = numbered("k", dim);
    header.extend(["set", "hbar"].map(String::from));
    idx.row(header);
    for entry in &quadrature.entries {
        let mut row: Vec<String> = entry.index.iter().map(|k| k.to_string()).collect();
        row.push(
            match entry.set {
                oed::dasq::DasqSet::Old => "old",
                oed::dasq::DasqSet::Active => "active",
            }
            .to_string(),
        );
        row.push(fmt(entry.hbar));
        idx.row(row);
    }

    Ok(vec![exp.finish()?, l2.finish()?, idx.finish()?])
}

fn run_infer(config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let model = build_model(config)?;
    let prior = build_prior(config, &model)?;
    let noise = build_noise(config)?;
    let mcmc = section(&config.mcmc, "mcmc")?;

    if mcmc.design.len() != model.n_design() {
        return Err(CliError::new(format!(
            "[mcmc]: design has {} entries, model has {} design variables",
            mcmc.design.len(),
            model.n_design()
        )));
    }
    if mcmc.proposal_sd.len() != model.n_theta() {
        return Err(CliError::new(format!(
            "[mcmc]: proposal_sd has {} entries, model has {} parameters",
            mcmc.proposal_sd.len(),
            model.n_theta()
        )));
    }

    let y = match (&mcmc.y, &mcmc.theta_true) {
        (Some(y), _) => {
            if y.len() != model.n_y() {
                return Err(CliError::new(format!(
                    "[mcmc]: y has {} entries, model has {} observables",
                    y.len(),
                    model.n_y()
                )));
            }
            y.clone()
        }
        (None, Some(theta)) => {
            if theta.len() != model.n_theta() {
                return Err(CliError::new(format!(
                    "[mcmc]: theta_true has {} entries, model has {} parameters",
                    theta.len(),
                    model.n_theta()
                )));
            }
            let mut out = vec![0.0; model.n_y()];
            sample_observation(
                &model,
                &noise,
                theta,
                &mcmc.design,
                &mut stream(config.seed, 0),
                &mut out,
            )?;
            out
        }
        (None, None) => {
            return Err(CliError::new("[mcmc]: either y or theta_true is required"))
        }
    };

    let log_posterior = model_log_posterior(&model, &prior, &noise, &mcmc.design, &y);
    let x0: Vec<f64> = prior
        .lo()
        .iter()
        .zip(prior.hi())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let variances: Vec<f64> = mcmc.proposal_sd.iter().map(|s| s * s).collect();
    let mut dram_config = DramConfig::diagonal(&variances);
    dram_config.burn_in = mcmc.burn_in;
    dram_config.thin = mcmc.thin;

    let chain = dram_run(
        &log_posterior,
        &x0,
        &dram_config,
        mcmc.steps,
        &mut stream(config.seed, 1),
    )?;

    let json = config.provenance_json();
    let mut out = Artifact::new(dir, "chain.csv", config.seed, &json);
    let mut header = vec!["step".to_string()];
    header.extend(numbered("theta", chain.n_theta));
    header.extend(["logpost", "stage_accepted"].map(String::from));
    out.row(header);
    for i in 0..chain.n_steps() {
        let mut row = vec![i.to_string()];
        row.extend(chain.sample(i).iter().map(|v| fmt(*v)));
        row.push(fmt(chain.logpost[i]));
        row.push(chain.stage_accepted[i].to_string());
        out.row(row);
    }
    let mut files = vec![out.finish()?];

    if let Some(resolution) = mcmc.grid {
        if model.n_theta() != 2 {
            return Err(CliError::new(
                "[mcmc]: the posterior density grid needs a two-parameter model",
            ));
        }
        let grid = posterior_grid(&log_posterior, prior.lo(), prior.hi(), resolution)?;
        let mut g = Artifact::new(dir, "posterior.csv", config.seed, &json);
        g.row(["theta_1", "theta_2", "density"]);
        for (i, &a) in grid.axes[0].iter().enumerate() {
            for (j, &b) in grid.axes[1].iter().enumerate() {
                g.row([fmt(a), fmt(b), fmt(grid.density[i * resolution + j])]);
            }
        }
        files.push(g.finish()?);
    }

    Ok(files)
}

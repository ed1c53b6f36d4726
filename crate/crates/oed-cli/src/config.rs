//! Run configuration: strict TOML with dotted-path overrides.
//!
//! Unknown keys are rejected everywhere, so a typo fails the run instead
//! of silently falling back to a default. The `seed` field is mandatory
//! for the same reason: every stochastic stage derives its streams from
//! it, and omitting it would make runs nondeterministic by accident.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Anything the command line can fail with, carried as a message that
/// the binary serializes into its machine-readable error record.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
}

impl CliError {
    pub fn new(message: impl Into<String>) -> CliError {
        CliError { message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<oed::Error> for CliError {
    fn from(e: oed::Error) -> CliError {
        CliError::new(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::new(format!("i/o: {e}"))
    }
}

/// A full run description. Sections beyond `model` are optional;
/// each subcommand checks for the ones it needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; all per-stage streams are derived from it.
    pub seed: u64,
    /// Output directory. A delivery knob rather than part of the study
    /// definition, so it is excluded from the provenance header.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<BoxConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    /// Design-space box for scans, optimization, and surrogates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<BoxConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<SurrogateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<BiasConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// The scalar algebraic test model.
    Simple,
    /// A polynomial chaos expansion loaded from a saved text file.
    Pce,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Number of independent repetitions of the experiment; values
    /// above 1 wrap the model in a joint batch design.
    #[serde(default = "default_experiments")]
    pub experiments: usize,
    /// Path to a saved expansion, required when `kind = "pce"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<PathBuf>,
}

fn default_experiments() -> usize {
    1
}

/// An axis-aligned box, used for both prior supports and design spaces.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxConfig {
    fn validate(&self, section: &str) -> Result<(), CliError> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(CliError::new(format!(
                "[{section}]: lo and hi must be nonempty and the same length"
            )));
        }
        for (a, b) in self.lo.iter().zip(&self.hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(CliError::new(format!(
                    "[{section}]: bounds must be finite with lo < hi, got [{a}, {b}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Observation noise standard deviation, shared by all observables.
    pub sigma: f64,
}

/// Nested Monte Carlo estimator settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub n_out: usize,
    pub n_in: usize,
    /// Share one prior batch between the outer average and every inner
    /// evidence estimate (requires `n_in == n_out`).
    #[serde(default = "default_true")]
    pub reuse: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Grid nodes per design dimension.
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptMethod {
    Nmns,
    Spsa,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub method: OptMethod,
    /// Noisy objective evaluations per run.
    pub budget: usize,
    /// Independent restarts.
    pub runs: usize,
    /// Reuse-estimator sample count of the noisy objective.
    pub n_objective: usize,
    /// Reuse-estimator sample count of the final high-quality re-score.
    pub n_rescore: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Total polynomial order of the expansion.
    pub order: u32,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    /// Fixed Smolyak level of the reference grid for the L2 report.
    #[serde(default = "default_check_level")]
    pub check_level: u32,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_evals() -> usize {
    10_000
}

fn default_check_level() -> u32 {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub steps: usize,
    /// Steps discarded by summary consumers; default one fifth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Initial proposal standard deviation per parameter.
    pub proposal_sd: Vec<f64>,
    /// Design point the data are observed at.
    pub design: Vec<f64>,
    /// Parameter value used to synthesize the observation when `y` is
    /// not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_true: Option<Vec<f64>>,
    /// Observed data; synthesized from `theta_true` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    /// Posterior density grid resolution (two-parameter models only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

fn default_thin() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasConfig {
    /// Design point the bias is measured at.
    pub design: Vec<f64>,
    /// Inner sample counts to profile.
    pub n_in: Vec<usize>,
    pub reuse: bool,
    /// Total outer samples spent per profiled point.
    pub total_outer: usize,
    /// Outer count per replication; resample studies may decouple it
    /// from `n_in`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_out: Option<usize>,
}

impl RunConfig {
    /// Checks every section that is present for internal consistency.
    /// Cross-section checks (dimension agreement with the model) happen
    /// when a subcommand builds its pieces.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.model.experiments == 0 {
            return Err(CliError::new("[model]: experiments must be at least 1"));
        }
        if self.model.kind == ModelKind::Pce && self.model.expansion.is_none() {
            return Err(CliError::new(
                "[model]: kind = \"pce\" requires an expansion path",
            ));
        }
        if let Some(p) = &self.prior {
            p.validate("prior")?;
        }
        if let Some(d) = &self.design {
            d.validate("design")?;
        }
        if let Some(n) = &self.noise {
            if !(n.sigma.is_finite() && n.sigma > 0.0) {
                return Err(CliError::new(format!(
                    "[noise]: sigma must be finite and positive, got {}",
                    n.sigma
                )));
            }
        }
        if let Some(e) = &self.estimator {
            if e.n_out == 0 || e.n_in == 0 {
                return Err(CliError::new("[estimator]: sample counts must be positive"));
            }
            if e.reuse && e.n_in != e.n_out {
                return Err(CliError::new(format!(
                    "[estimator]: reuse requires n_in == n_out, got {} and {}",
                    e.n_in, e.n_out
                )));
            }
        }
        if let Some(s) = &self.scan {
            if s.nodes.is_empty() || s.nodes.contains(&0) {
                return Err(CliError::new("[scan]: nodes must be nonempty and positive"));
            }
        }
        if let Some(o) = &self.optimize {
            if o.budget == 0 || o.runs == 0 || o.n_objective == 0 || o.n_rescore == 0 {
                return Err(CliError::new("[optimize]: all counts must be positive"));
            }
        }
        if let Some(s) = &self.surrogate {
            if !(s.tol.is_finite() && s.tol > 0.0) || s.max_evals == 0 {
                return Err(CliError::new(
                    "[surrogate]: tol must be positive and max_evals nonzero",
                ));
            }
        }
        if let Some(m) = &self.mcmc {
            if m.steps == 0 || m.thin == 0 {
                return Err(CliError::new("[mcmc]: steps and thin must be positive"));
            }
            if m.design.is_empty() || m.proposal_sd.is_empty() {
                return Err(CliError::new("[mcmc]: design and proposal_sd are required"));
            }
            if m.proposal_sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(CliError::new("[mcmc]: proposal_sd entries must be positive"));
            }
            if m.grid.is_some_and(|g| g < 2) {
                return Err(CliError::new("[mcmc]: grid resolution must be at least 2"));
            }
        }
        if let Some(b) = &self.bias {
            if b.design.is_empty() || b.n_in.is_empty() {
                return Err(CliError::new("[bias]: design and n_in are required"));
            }
            if b.n_in.contains(&0) || b.total_outer == 0 {
                return Err(CliError::new("[bias]: sample counts must be positive"));
            }
        }
        Ok(())
    }

    /// The single-line JSON form embedded in every artifact header.
    pub fn provenance_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes to JSON")
    }
}

/// Loads a TOML config, applies `--set` overrides and flag overrides,
/// and validates the result.
pub fn load_config(
    path: &Path,
    sets: &[String],
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(format!("reading {}: {e}", path.display())))?;
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| CliError::new(format!("parsing {}: {e}", path.display())))?;
    for spec in sets {
        apply_set(&mut value, spec)?;
    }
    let mut config = RunConfig::deserialize(value)
        .map_err(|e| CliError::new(format!("config {}: {e}", path.display())))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.output = Some(o);
    }
    config.validate()?;
    Ok(config)
}

/// Applies one `key.path=value` override to the parsed TOML tree,
/// creating intermediate tables as needed. The value is parsed as a
/// TOML literal, falling back to a string when that fails.
fn apply_set(root: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::new(format!("--set expects key=value, got `{spec}`")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::new(format!("--set key has an empty segment: `{path}`")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            CliError::new(format!("--set {path}: `{key}` is not a table"))
        })?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node.as_table_mut().ok_or_else(|| {
        CliError::new(format!("--set {path}: parent of `{}` is not a table", keys[keys.len() - 1]))
    })?;
    table.insert(keys[keys.len() - 1].to_string(), parse_literal(raw));
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Value>() {
        Ok(toml::Value::Table(mut t)) => t.remove("v").expect("literal was just inserted"),
        _ => toml::Value::String(raw.to_string()),
    }
}

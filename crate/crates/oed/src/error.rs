//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector had a different length than the model or routine expected.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A noise standard deviation came out non-positive or non-finite.
    #[error("non-positive noise standard deviation {sigma} for observable {index}")]
    NonpositiveNoise { index: usize, sigma: f64 },

    /// A box constraint had lower bound >= upper bound or non-finite edges.
    #[error("invalid bounds in dimension {index}: [{lo}, {hi}]")]
    InvalidBounds { index: usize, lo: f64, hi: f64 },

    /// An optimizer start point lay outside the feasible box.
    #[error("start point outside the feasible box in dimension {index}: {value} not in [{lo}, {hi}]")]
    InfeasibleStart { index: usize, value: f64, lo: f64, hi: f64 },

    /// The box shrunk by the SPSA perturbation radius became empty.
    #[error("box shrunk by perturbation radius {radius} is empty in dimension {index}")]
    EmptyShrunkenBox { index: usize, radius: f64 },

    /// An objective evaluation returned NaN or infinity.
    #[error("objective returned a non-finite value {value} at iteration {iteration}")]
    NonfiniteObjective { iteration: usize, value: f64 },

    /// A grid scan was requested with zero nodes in some dimension.
    #[error("grid scan needs at least one node per dimension, got {nodes} in dimension {index}")]
    EmptyGrid { index: usize, nodes: usize },

    /// An integrand returned NaN or infinity at a quadrature node.
    #[error("integrand returned a non-finite value in output {output} at node {node:?}")]
    NonfiniteIntegrand { output: usize, node: Vec<f64> },

    /// The MCMC chain could not start because the initial point has zero
    /// posterior density.
    #[error("chain start point has non-finite log posterior {logpost}")]
    ChainInit { logpost: f64 },

    /// A normalization constant vanished where a positive value was needed.
    #[error("zero or non-finite denominator in {context}")]
    ZeroDenominator { context: &'static str },

    /// Every grid node had zero posterior density.
    #[error("no finite log-posterior value anywhere on the {context} grid")]
    AllMinusInfinity { context: &'static str },

    /// Burn-in and thinning left nothing to summarize.
    #[error("no chain samples retained after burn-in and thinning ({retained} kept)")]
    EmptyChain { retained: usize },

    /// A peak-finding routine found its maximum on the window boundary.
    #[error("no interior peak: maximum of {what} sits at the {which} end of the time window")]
    NoPeak { what: &'static str, which: &'static str },

    /// The stiff integrator could not complete a step.
    #[error("integrator failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    /// A mixture state or reactor setup failed its invariants.
    #[error("invalid mixture state: {reason}")]
    InvalidState { reason: String },

    /// A species name was not found in the mechanism.
    #[error("unknown species {name:?}")]
    UnknownSpecies { name: String },

    /// A mechanism file failed structural validation.
    #[error("bad mechanism: {reason}")]
    BadMechanism { reason: String },

    /// A reaction does not conserve elements.
    #[error("element imbalance in reaction {index}: element {element} has net {net}")]
    ElementImbalance {
        index: usize,
        element: String,
        net: f64,
    },

    /// A data file or text payload failed to parse.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// An underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

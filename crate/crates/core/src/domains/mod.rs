//! Evaluation environments: two analytic benchmarks and a simulated
//! human-robot teleoperation task. All evaluators are pure functions of
//! (parameters, derived seeds) and safe to call from any number of threads.

pub mod plateau;
pub mod sphere_lp;
pub mod teleop;

pub use plateau::Plateau;
pub use sphere_lp::SphereLp;
pub use teleop::{M1Kind, Scenario, Teleop, TeleopConsts};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analytic objective and measure gradients at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub objective: Vec<f64>,
    /// One gradient per measure dimension.
    pub measures: Vec<Vec<f64>>,
}

/// Outcome of evaluating one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub objective: f64,
    pub measures: Vec<f64>,
    pub gradients: Option<Gradients>,
    /// Robot visitation counts over an 8x8 grid, averaged across rollouts
    /// (teleop only).
    pub occupancy: Option<Vec<f64>>,
    /// Robot positions of the first rollout (teleop only).
    pub trajectory: Option<Vec<(f64, f64)>>,
    /// Rollout seeds consumed by this evaluation (empty for deterministic
    /// domains).
    pub seeds: Vec<u64>,
}

impl EvalResult {
    pub fn analytic(objective: f64, measures: Vec<f64>) -> Self {
        Self {
            objective,
            measures,
            gradients: None,
            occupancy: None,
            trajectory: None,
            seeds: Vec::new(),
        }
    }
}

/// A domain the scheduler can search. Implemented by the built-in domains
/// and by the surrogate model (which stands in for an expensive domain
/// during inner-loop search).
pub trait Evaluator: Sync {
    fn param_dim(&self) -> usize;
    fn measure_dim(&self) -> usize;
    /// Per-dimension parameter bounds for uniform sampling and initialization.
    fn parameter_box(&self) -> (Vec<f64>, Vec<f64>);
    /// Initial search mean.
    fn start_point(&self) -> Vec<f64>;
    /// Default emitter step size for this parameter scale.
    fn default_sigma(&self) -> f64;
    /// Measure-space bounds for the default archive.
    fn measure_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn default_resolution(&self) -> Vec<usize>;
    fn gradients_available(&self) -> bool {
        false
    }
    /// Project a candidate onto the domain's feasible set, returning the
    /// repaired parameters and the squared edit distance. Identity for
    /// unconstrained domains.
    fn repair(&self, params: &[f64]) -> Result<(Vec<f64>, f64)> {
        Ok((params.to_vec(), 0.0))
    }
    fn evaluate(&self, params: &[f64]) -> Result<EvalResult>;
}

/// Domain selection as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainConfig {
    SphereLp { dim: usize },
    Plateau { dim: usize },
    Teleop { m1: M1Kind },
}

impl DomainConfig {
    /// Instantiate the domain. The master seed feeds per-scenario evaluation
    /// seeds in stochastic domains.
    pub fn build(&self, master_seed: u64) -> Result<Domain> {
        Ok(match self {
            DomainConfig::SphereLp { dim } => Domain::SphereLp(SphereLp::new(*dim)?),
            DomainConfig::Plateau { dim } => Domain::Plateau(Plateau::new(*dim)?),
            DomainConfig::Teleop { m1 } => {
                Domain::Teleop(Teleop::new(TeleopConsts::default(), *m1, master_seed))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainConfig::SphereLp { .. } => "sphere-lp",
            DomainConfig::Plateau { .. } => "plateau",
            DomainConfig::Teleop { .. } => "teleop",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Domain {
    SphereLp(SphereLp),
    Plateau(Plateau),
    Teleop(Teleop),
    /// A trained net standing in for an expensive domain; only constructed
    /// programmatically for inner-loop searches, never from a `DomainConfig`.
    Surrogate(crate::surrogate::SurrogateEvaluator),
}

macro_rules! delegate {
    ($self:ident, $d:ident => $body:expr) => {
        match $self {
            Domain::SphereLp($d) => $body,
            Domain::Plateau($d) => $body,
            Domain::Teleop($d) => $body,
            Domain::Surrogate($d) => $body,
        }
    };
}

impl Evaluator for Domain {
    fn param_dim(&self) -> usize {
        delegate!(self, d => d.param_dim())
    }
    fn measure_dim(&self) -> usize {
        delegate!(self, d => d.measure_dim())
    }
    fn parameter_box(&self) -> (Vec<f64>, Vec<f64>) {
        delegate!(self, d => d.parameter_box())
    }
    fn start_point(&self) -> Vec<f64> {
        delegate!(self, d => d.start_point())
    }
    fn default_sigma(&self) -> f64 {
        delegate!(self, d => d.default_sigma())
    }
    fn measure_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        delegate!(self, d => d.measure_bounds())
    }
    fn default_resolution(&self) -> Vec<usize> {
        delegate!(self, d => d.default_resolution())
    }
    fn gradients_available(&self) -> bool {
        delegate!(self, d => d.gradients_available())
    }
    fn repair(&self, params: &[f64]) -> Result<(Vec<f64>, f64)> {
        delegate!(self, d => d.repair(params))
    }
    fn evaluate(&self, params: &[f64]) -> Result<EvalResult> {
        delegate!(self, d => d.evaluate(params))
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got, context: "params" });
    }
    Ok(())
}

//! Damped Newton on the log form of the equation, continuation in s,
//! regularization sweeps in ε, and the closed and Dirichlet drivers.

mod drivers;
mod monitor;
mod newton;

pub use drivers::{
    continuation_solve, dirichlet_solve, epsilon_sweep, harmonic_barrier, max_principle_ratio, torus_calabi_solve,
    SweepStage,
};
pub use monitor::{estimate_monitor, Monitor};
pub use newton::{newton_solve, NewtonOutcome};

use serde::Serialize;
use thiserror::Error;

use crate::grid::GridError;
use crate::linsolve::{LinSolveError, Method};
use crate::ma::MaError;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Ma(#[from] MaError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Linear(#[from] LinSolveError),
    #[error("rejected input: {0}")]
    Rejected(String),
    #[error("regularized right-hand side leaves its band: {0}")]
    Band(String),
}

impl SolverError {
    /// Whether the error is a rejection of the input rather than a failure
    /// of the iteration.
    pub fn is_rejection(&self) -> bool {
        !matches!(self, SolverError::Linear(_) | SolverError::Band(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// sup-norm tolerance on the log residual
    pub residual_tol: f64,
    /// smallest step length tried by the backtracking
    pub min_damping: f64,
    /// accepted iterates keep λ_min ≥ σ λ_min(previous iterate)
    pub sigma: f64,
    /// upper bound on the relative tolerance of inner linear solves
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    #[serde(skip)]
    pub method: Method,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iter: 60,
            residual_tol: 1e-10,
            min_damping: 1.0 / 4096.0,
            sigma: 0.1,
            linear_tol: 1e-2,
            linear_max_iter: 2000,
            method: Method::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationSchedule {
    pub s_steps: Vec<f64>,
    pub eps_steps: Vec<f64>,
    pub newton: NewtonConfig,
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        ContinuationSchedule {
            s_steps: (0..=10).map(|k| k as f64 / 10.0).collect(),
            eps_steps: vec![1e-1, 1e-2, 1e-3, 1e-4],
            newton: NewtonConfig::default(),
        }
    }
}

impl ContinuationSchedule {
    pub fn validate(&self) -> Result<(), SolverError> {
        let s = &self.s_steps;
        if s.is_empty() || s[0] != 0.0 || *s.last().unwrap() != 1.0 || s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SolverError::Rejected("s steps must increase from 0 to 1".into()));
        }
        let e = &self.eps_steps;
        if e.iter().any(|v| !(*v > 0.0)) || e.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(SolverError::Rejected("ε steps must be positive and strictly decreasing".into()));
        }
        let nc = &self.newton;
        if !(nc.sigma > 0.0 && nc.sigma < 1.0) {
            return Err(SolverError::Rejected(format!("σ = {} is not in (0, 1)", nc.sigma)));
        }
        if !(nc.residual_tol > 0.0) || !(nc.min_damping > 0.0 && nc.min_damping <= 1.0) || nc.max_iter == 0 {
            return Err(SolverError::Rejected("invalid Newton settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub label: String,
    pub parameter: f64,
    pub converged: bool,
    pub iterations: usize,
    pub linear_iterations: usize,
    pub residual: f64,
    pub effective_tol: f64,
    pub lambda_min: f64,
    /// smallest λ_min over the accepted iterates of the stage
    pub min_accepted_lambda: f64,
    pub monitor: Monitor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub stages: Vec<StageReport>,
    pub final_residual: f64,
    /// constant c with which ψ was replaced by cψ
    pub rescale: Option<f64>,
    /// discrete compatibility constant: log det(χ + ∂∂̄u) - log(ψ det g) on closed grids
    pub shift: Option<f64>,
    pub checks: Vec<Check>,
    pub message: Option<String>,
}

impl SolveReport {
    fn new() -> Self {
        SolveReport {
            converged: false,
            stages: Vec::new(),
            final_residual: f64::NAN,
            rescale: None,
            shift: None,
            checks: Vec::new(),
            message: None,
        }
    }

    fn check(&mut self, name: &str, passed: bool, value: f64) {
        self.checks.push(Check { name: name.into(), passed, value });
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

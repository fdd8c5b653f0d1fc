use serde::{Deserialize, Serialize};

use crate::error::{Result, TrexError};

/// Algorithm used for the convex signed-coordinate TREX subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SubproblemMethod {
    /// Exact cyclic coordinate minimization (closed-form 1-D updates).
    #[default]
    CoordinateDescent,
    /// Accelerated proximal gradient with backtracking.
    ProximalGradient,
}

/// Shared solver settings for the LASSO and TREX solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// TREX constant, `0 < c < 2`.
    pub c: f64,
    /// Sweep (coordinate descent) or iteration (proximal gradient) cap.
    pub max_iterations: usize,
    /// Relative objective decrease that counts as stalled.
    pub tolerance: f64,
    /// Subproblem denominators must stay above `domain_guard * Omega*(X^T Y)`.
    pub domain_guard: f64,
    /// Starts per group subproblem (non-separable norms only).
    pub multistart_count: usize,
    pub seed: u64,
    pub method: SubproblemMethod,
    /// Accept designs whose columns are not normalized to `sqrt(n)`.
    pub allow_unnormalized: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            c: 0.5,
            max_iterations: 100_000,
            tolerance: 1e-12,
            domain_guard: 1e-10,
            multistart_count: 8,
            seed: 0,
            method: SubproblemMethod::default(),
            allow_unnormalized: false,
        }
    }
}

impl SolverConfig {
    pub fn with_c(c: f64) -> Result<Self> {
        let cfg = Self { c, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 2.0) {
            return Err(TrexError::Parameter(format!("c must lie in (0, 2), got {}", self.c)));
        }
        if self.max_iterations == 0 {
            return Err(TrexError::Parameter("max_iterations must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(TrexError::Parameter("tolerance must be positive".into()));
        }
        if !(self.domain_guard > 0.0 && self.domain_guard < 1.0) {
            return Err(TrexError::Parameter("domain_guard must lie in (0, 1)".into()));
        }
        if self.multistart_count == 0 {
            return Err(TrexError::Parameter("multistart_count must be positive".into()));
        }
        Ok(())
    }
}

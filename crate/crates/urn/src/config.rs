use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A configuration field that failed validation.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid `{field}`: {message}")]
pub struct UrnConfigError {
    pub field: &'static str,
    pub message: String,
}

impl UrnConfigError {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

/// Parameters of the multidimensional refinement urn and of the ensemble run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UrnConfig {
    /// Number of solution dimensions `D`.
    pub dimensions: usize,
    /// Refinement strength, strictly inside (0, 1).
    pub lambda: f64,
    /// Path-dependence bias, non-negative.
    pub beta: f64,
    /// Refinement steps per chain.
    pub steps: u64,
    /// Independent chains per simulation.
    pub chains: usize,
    /// Proposals generated per refinement step.
    pub local_k: u32,
    /// Probability that a single proposal improves the drawn dimension.
    pub improve_prob: f64,
    pub num_sims: usize,
    pub seed: u64,
}

impl Default for UrnConfig {
    fn default() -> Self {
        Self {
            dimensions: 2,
            lambda: 0.99,
            beta: 4.0,
            steps: 4096,
            chains: 32,
            local_k: 1,
            improve_prob: 1.0,
            num_sims: 2048,
            seed: 0,
        }
    }
}

impl UrnConfig {
    /// Settings of the published local-batch figure: 4096 proposals per chain,
    /// `beta = 4`, 32 chains, 2048 simulations. Other fields are kept.
    pub fn with_figure_preset(mut self) -> Self {
        self.steps = 4096;
        self.beta = 4.0;
        self.chains = 32;
        self.num_sims = 2048;
        self
    }

    pub fn validate(&self) -> Result<(), UrnConfigError> {
        if self.dimensions == 0 {
            return Err(UrnConfigError::new("dimensions", "must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(UrnConfigError::new(
                "lambda",
                format!("must lie strictly inside (0, 1), got {}", self.lambda),
            ));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(UrnConfigError::new(
                "beta",
                format!("must be a finite non-negative number, got {}", self.beta),
            ));
        }
        if self.steps == 0 {
            return Err(UrnConfigError::new("steps", "must be positive"));
        }
        if self.chains == 0 {
            return Err(UrnConfigError::new("chains", "must be positive"));
        }
        if self.local_k == 0 {
            return Err(UrnConfigError::new("local_k", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.improve_prob) {
            return Err(UrnConfigError::new(
                "improve_prob",
                format!("must lie in [0, 1], got {}", self.improve_prob),
            ));
        }
        if self.num_sims == 0 {
            return Err(UrnConfigError::new("num_sims", "must be positive"));
        }
        Ok(())
    }

    /// Probability that a step applies a refinement: the best of `local_k`
    /// independent proposals succeeds unless all of them fail.
    pub fn step_success_prob(&self) -> f64 {
        1.0 - (1.0 - self.improve_prob).powi(self.local_k as i32)
    }
}

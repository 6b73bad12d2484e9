//! Multidimensional Pólya-urn refinement model.
//!
//! A solution is a vector of per-dimension refinement counts scored by its
//! weakest dimension. Each refinement step draws a dimension with probability
//! proportional to `1 + beta * y_d`, so early progress attracts further work
//! to the same dimension. A step spends `K` proposals on the drawn dimension
//! and succeeds when at least one of them does, with probability
//! `1 - (1 - p)^K`.
//!
//! The crate measures two allocation questions on this model: how the
//! failure rate of a best-of-`C` ensemble decays with `C`, and how a fixed
//! proposal budget should be split between depth and `K`.

pub mod config;
pub mod model;
pub mod sim;
pub mod sweep;

pub use config::{UrnConfig, UrnConfigError};
pub use model::{urn_score, urn_step_probs, StepDistribution, UrnState};
pub use sim::{
    chain_rng, failure_curve, minimal_width, simulate_chain, simulate_chain_scores,
    simulate_ensemble, ChainOutcome, EnsembleStats,
};
pub use sweep::{allocation_sweep, power_of_two_ks, SkippedCell, SweepCell, SweepTable};

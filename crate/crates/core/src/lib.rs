//! Evaluation-driven test-time search.
//!
//! A run keeps `C` independent trajectories. Each refinement step of a
//! trajectory asks a generator for `K` candidates, scores them in a
//! sandbox, and commits the best one to the trajectory's history; `L`
//! steps per trajectory spend a budget of `C * L * K` evaluations.
//!
//! - [`model`]: tasks, nodes, trajectories, run configuration and budget.
//! - [`selection`]: which history nodes a proposal shows, and the prompt.
//! - [`gateway`]: the generator interface, token budget and mocks.
//! - [`sandbox`]: process-isolated evaluation, verification and failure
//!   signals.
//! - [`scheduler`]: the asynchronous coordinator, event log, pruning,
//!   restarts, sweeps and checkpoints.
//! - [`export`]: weighted training records built from event logs.

pub mod export;
pub mod gateway;
pub mod model;
pub mod sandbox;
pub mod scheduler;
pub mod selection;

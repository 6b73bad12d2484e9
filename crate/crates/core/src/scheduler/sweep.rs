//! Runs over a grid of design points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{derive_seed, RunConfig, TaskSpec};

use super::engine::Engine;
use super::events::EventLog;
use super::restart::{run_with_restarts, SearchError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("grid point {index} ({width}, {depth}, {samples}) has budget {budget}, expected {expected}")]
    BudgetMismatch {
        index: usize,
        width: u32,
        depth: u32,
        samples: u32,
        budget: u64,
        expected: u64,
    },
    #[error("the grid is empty")]
    Empty,
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub width: u32,
    pub depth: u32,
    pub samples: u32,
    pub run_id: String,
    pub best_score: f64,
    pub planned_evaluations: u64,
    pub consumed_evaluations: u64,
    pub status: String,
}

/// Rejects grids whose points do not all spend `fixed_budget` evaluations.
pub fn check_grid(grid: &[(u32, u32, u32)], fixed_budget: Option<u64>) -> Result<(), SweepError> {
    if grid.is_empty() {
        return Err(SweepError::Empty);
    }
    let Some(expected) = fixed_budget else { return Ok(()) };
    for (index, &(width, depth, samples)) in grid.iter().enumerate() {
        let budget = width as u64 * depth as u64 * samples as u64;
        if budget != expected {
            return Err(SweepError::BudgetMismatch {
                index,
                width,
                depth,
                samples,
                budget,
                expected,
            });
        }
    }
    Ok(())
}

/// One search per grid point, each with its own derived seed.
pub fn sweep(
    task: &TaskSpec,
    base: &RunConfig,
    grid: &[(u32, u32, u32)],
    fixed_budget: Option<u64>,
    engine: &Engine,
    log: &mut EventLog,
) -> Result<Vec<SweepRow>, SweepError> {
    check_grid(grid, fixed_budget)?;
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &(width, depth, samples)) in grid.iter().enumerate() {
        let config = RunConfig {
            width,
            depth,
            samples,
            rng_seed: derive_seed(base.rng_seed, i as u64),
            ..base.clone()
        };
        let outcome = run_with_restarts(task.clone(), config, engine, log)?;
        let last = outcome.runs.last().expect("at least one run");
        rows.push(SweepRow {
            width,
            depth,
            samples,
            run_id: last.state.run_id.clone(),
            best_score: outcome.best.score,
            planned_evaluations: outcome.runs.iter().map(|r| r.state.ledger.planned_evaluations).sum(),
            consumed_evaluations: outcome.runs.iter().map(|r| r.state.ledger.consumed_evaluations).sum(),
            status: match outcome.status() {
                super::engine::RunStatus::Completed => "completed".into(),
                super::engine::RunStatus::Aborted(_) => "aborted".into(),
                super::engine::RunStatus::Interrupted => "interrupted".into(),
            },
        });
    }
    Ok(rows)
}

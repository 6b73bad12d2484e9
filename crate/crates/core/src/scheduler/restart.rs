//! Multi-run search: each restart seeds a fresh run with the previous run's
//! best solution.

use serde_json::json;
use thiserror::Error;
use tracing::info;

use crate::model::{init_run, best_overall, Node, RunConfig, RunState, SetupError, TaskSpec};
use crate::sandbox::Evaluator;

use super::checkpoint::Checkpoint;
use super::engine::{resume, run, Engine, RunError, RunOutcome, RunStatus};
use super::events::{Draft, EventKind, EventLog};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub runs: Vec<RunOutcome>,
    pub best: Node,
    /// A restart failed to improve on the run before it.
    pub saturated: bool,
}

impl SearchOutcome {
    pub fn status(&self) -> &RunStatus {
        &self.runs.last().expect("at least one run").status
    }
}

/// A new run whose initial solution is the best solution of `previous`.
pub fn restart_from_best(previous: &RunState, evaluator: &dyn Evaluator) -> Result<RunState, SetupError> {
    let best = best_overall(previous);
    let mut task = previous.task.clone();
    task.initial_solution = best.solution;
    init_run(task, previous.config.clone(), evaluator, previous.restart_index + 1)
}

/// Runs the first search and then `config.restarts` restarts, all into the
/// same log. Stops early if a run does not complete.
pub fn run_with_restarts(
    task: TaskSpec,
    config: RunConfig,
    engine: &Engine,
    log: &mut EventLog,
) -> Result<SearchOutcome, SearchError> {
    let state = init_run(task, config, engine.evaluator.as_ref(), 0)?;
    let first = run(state, engine, log)?;
    continue_search(first, engine, log)
}

/// Finishes the run saved in `checkpoint`, then any restarts it still owes.
/// `saturated` only compares runs made by this call.
pub fn resume_with_restarts(
    checkpoint: Checkpoint,
    engine: &Engine,
    log: &mut EventLog,
) -> Result<SearchOutcome, SearchError> {
    let first = resume(checkpoint, engine, log)?;
    continue_search(first, engine, log)
}

fn continue_search(first: RunOutcome, engine: &Engine, log: &mut EventLog) -> Result<SearchOutcome, SearchError> {
    let restarts = first.state.config.restarts;
    let mut runs: Vec<RunOutcome> = Vec::new();
    let mut saturated = false;
    let mut outcome = first;
    loop {
        if let Some(prev) = runs.last() {
            if outcome.best.score <= prev.best.score {
                saturated = true;
            }
        }
        if outcome.status != RunStatus::Completed || outcome.state.restart_index >= restarts {
            runs.push(outcome);
            break;
        }
        let next = restart_from_best(&outcome.state, engine.evaluator.as_ref())?;
        info!(
            previous = %outcome.state.run_id,
            next = %next.run_id,
            best = outcome.best.score,
            "restarting from best solution"
        );
        log.emit(
            &next.run_id,
            Draft::new(
                EventKind::Restart,
                json!({
                    "restart_index": next.restart_index,
                    "previous_run_id": outcome.state.run_id,
                    "previous_best_score": outcome.best.score,
                    "previous_best_node_id": outcome.best.node_id,
                    "initial_score": next.initial.score,
                }),
            ),
        )
        .map_err(RunError::Log)?;
        runs.push(outcome);
        outcome = run(next, engine, log)?;
    }
    let best = runs
        .iter()
        .map(|r| &r.best)
        .reduce(|a, b| if b.score > a.score { b } else { a })
        .expect("at least one run")
        .clone();
    Ok(SearchOutcome { runs, best, saturated })
}

//! Asynchronous execution of the search loop.
//!
//! A single coordinator thread owns the [`RunState`](crate::model::RunState).
//! Generation and evaluation run on two worker pools fed by bounded queues;
//! results come back over one channel in whatever order they finish. Each
//! trajectory may have at most `max_unresolved_batches_per_trajectory`
//! batches open, so the runtime never gets ahead of committed state by more
//! than that.

pub mod checkpoint;
pub mod engine;
pub mod events;
pub mod prune;
pub mod report;
pub mod restart;
pub mod sweep;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, BlockKey, Checkpoint, CheckpointError, InflightBatch};
pub use engine::{resume, run, DispatchRecord, DispatchStep, Engine, RunError, RunOutcome, RunStatus};
pub use events::{Draft, Event, EventKind, EventLog, SharedBuffer};
pub use prune::{apply_prune, PruneError};
pub use report::{read_events, render_report, report_from_events, LogReadStats, PruneSummary, RunReport};
pub use restart::{restart_from_best, resume_with_restarts, run_with_restarts, SearchError, SearchOutcome};
pub use sweep::{check_grid, sweep, SweepError, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cutoff {
    pub at_depth: u32,
    pub keep_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PruneSchedule {
    pub cutoffs: Vec<Cutoff>,
}

impl PruneSchedule {
    pub fn validate(&self, depth: u32) -> Result<(), String> {
        for w in self.cutoffs.windows(2) {
            if w[1].at_depth <= w[0].at_depth {
                return Err("cutoffs must have strictly increasing at_depth".into());
            }
        }
        for c in &self.cutoffs {
            if c.at_depth == 0 || c.at_depth >= depth {
                return Err(format!("cutoff at_depth {} must be in 1..{depth}", c.at_depth));
            }
            if !(c.keep_fraction > 0.0 && c.keep_fraction <= 1.0) {
                return Err(format!("keep_fraction {} must be in (0, 1]", c.keep_fraction));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DispatchMode {
    /// One request for all `K` samples.
    #[default]
    Batched,
    /// `K` single-sample requests.
    Streamed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispatchPolicy {
    pub mode: DispatchMode,
    pub max_unresolved_batches_per_trajectory: u32,
}

impl Default for DispatchPolicy {
    fn default() -> Self {
        Self {
            mode: DispatchMode::Batched,
            max_unresolved_batches_per_trajectory: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_validation() {
        let ok = PruneSchedule {
            cutoffs: vec![Cutoff { at_depth: 25, keep_fraction: 0.5 }],
        };
        assert!(ok.validate(100).is_ok());
        assert!(ok.validate(25).is_err());
        let unsorted = PruneSchedule {
            cutoffs: vec![
                Cutoff { at_depth: 30, keep_fraction: 0.5 },
                Cutoff { at_depth: 20, keep_fraction: 0.5 },
            ],
        };
        assert!(unsorted.validate(100).is_err());
        let zero = PruneSchedule {
            cutoffs: vec![Cutoff { at_depth: 5, keep_fraction: 0.0 }],
        };
        assert!(zero.validate(100).is_err());
    }
}

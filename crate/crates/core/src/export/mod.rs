//! Training-data export: trajectories rebuilt from event logs, binary
//! trajectory-level credit, peak truncation and a persistent replay buffer.
//!
//! Dataset rows are JSONL objects with the fields `task_id`,
//! `trajectory_id`, `step`, `prompt`, `response` and `weight`, in that
//! order.

pub mod buffer;
pub mod credit;
pub mod records;

use serde::{Deserialize, Serialize};

pub use buffer::{load_buffer, replay_buffer_merge, BufferIndex, IndexEntry, MergeSummary};
pub use credit::{assign_credit_irft, kept_count, truncate_after_peak};
pub use records::{export_dataset, parse_dataset, records_from_events, DatasetRow, ExportSummary, NodeRecord, TrajectoryRecord};

/// Selection ratio for a range of iterations (both ends inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RStage {
    pub from_iteration: u32,
    pub to_iteration: u32,
    pub r_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub r_schedule: Vec<RStage>,
    pub truncate_after_peak: bool,
    /// Rank trajectories within each task; otherwise across all tasks.
    pub per_task_grouping: bool,
    /// Also write rows with weight 0.
    pub include_zero_weight: bool,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            r_schedule: vec![
                RStage {
                    from_iteration: 1,
                    to_iteration: 4,
                    r_percent: 10.0,
                },
                RStage {
                    from_iteration: 5,
                    to_iteration: u32::MAX,
                    r_percent: 5.0,
                },
            ],
            truncate_after_peak: true,
            per_task_grouping: true,
            include_zero_weight: false,
        }
    }
}

impl ExportConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.r_schedule.is_empty() {
            return Err("r_schedule is empty".into());
        }
        for s in &self.r_schedule {
            if !(s.r_percent > 0.0 && s.r_percent <= 100.0) {
                return Err(format!("r_percent {} must be in (0, 100]", s.r_percent));
            }
            if s.from_iteration > s.to_iteration {
                return Err(format!("stage {}..{} is empty", s.from_iteration, s.to_iteration));
            }
        }
        Ok(())
    }

    /// Ratio for `iteration`; the last stage covers anything past the
    /// schedule.
    pub fn r_for(&self, iteration: u32) -> f64 {
        self.r_schedule
            .iter()
            .find(|s| (s.from_iteration..=s.to_iteration).contains(&iteration))
            .or(self.r_schedule.last())
            .map(|s| s.r_percent)
            .unwrap_or(100.0)
    }
}

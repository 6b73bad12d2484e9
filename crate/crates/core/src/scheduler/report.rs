//! Summaries rebuilt from an event log alone.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::model::{NodeId, FAILURE_SCORE};

use super::events::{Event, EventKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogReadStats {
    pub lines: u64,
    pub corrupt: u64,
}

impl LogReadStats {
    pub fn corrupt_fraction(&self) -> f64 {
        if self.lines == 0 {
            0.0
        } else {
            self.corrupt as f64 / self.lines as f64
        }
    }
}

/// Parses every line it can; blank lines are ignored, unparseable ones are
/// counted and skipped. I/O errors end the read early and count as corrupt.
pub fn read_events<R: BufRead>(reader: R) -> (Vec<Event>, LogReadStats) {
    let mut events = Vec::new();
    let mut stats = LogReadStats::default();
    for line in reader.lines() {
        let Ok(line) = line else {
            stats.lines += 1;
            stats.corrupt += 1;
            break;
        };
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        match serde_json::from_str::<Event>(&line) {
            Ok(e) => events.push(e),
            Err(_) => stats.corrupt += 1,
        }
    }
    (events, stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub at_depth: u32,
    pub kept: Vec<u32>,
    pub pruned: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub task_id: String,
    pub restart_index: u32,
    /// `completed`, `aborted`, or `incomplete` when the log has no finish.
    pub status: String,
    pub initial_score: f64,
    pub best_score: f64,
    pub best_node_id: NodeId,
    pub planned_evaluations: u64,
    pub consumed_evaluations: u64,
    pub synthetic_failures: u64,
    pub generator_requests: u64,
    pub commits: u64,
    /// Best non-failed score seen per trajectory.
    pub trajectory_best: BTreeMap<u32, f64>,
    pub prunes: Vec<PruneSummary>,
    /// `(evaluations so far, best so far)` at every improvement, in log order.
    pub best_curve: Vec<(u64, f64)>,
}

fn f(v: &serde_json::Value, key: &str) -> Option<f64> {
    v.get(key).and_then(serde_json::Value::as_f64)
}

fn u(v: &serde_json::Value, key: &str) -> Option<u64> {
    v.get(key).and_then(serde_json::Value::as_u64)
}

fn ids(v: &serde_json::Value, key: &str) -> Vec<u32> {
    v.get(key)
        .and_then(|a| a.as_array())
        .map(|a| a.iter().filter_map(|x| x.as_u64()).map(|x| x as u32).collect())
        .unwrap_or_default()
}

/// One report per run id, in order of first appearance.
pub fn report_from_events(events: &[Event]) -> Vec<RunReport> {
    let mut order: Vec<String> = Vec::new();
    let mut by_run: BTreeMap<String, RunReport> = BTreeMap::new();
    for e in events {
        let r = by_run.entry(e.run_id.clone()).or_insert_with(|| {
            order.push(e.run_id.clone());
            RunReport {
                run_id: e.run_id.clone(),
                task_id: String::new(),
                restart_index: 0,
                status: "incomplete".into(),
                initial_score: FAILURE_SCORE,
                best_score: FAILURE_SCORE,
                best_node_id: NodeId::INITIAL,
                planned_evaluations: 0,
                consumed_evaluations: 0,
                synthetic_failures: 0,
                generator_requests: 0,
                commits: 0,
                trajectory_best: BTreeMap::new(),
                prunes: Vec::new(),
                best_curve: Vec::new(),
            }
        });
        let p = &e.payload;
        match e.kind {
            EventKind::Setup => {
                r.task_id = p.get("task_id").and_then(|t| t.as_str()).unwrap_or_default().to_string();
                r.restart_index = u(p, "restart_index").unwrap_or(0) as u32;
                r.planned_evaluations = u(p, "planned_evaluations").unwrap_or(0);
                r.initial_score = f(p, "initial_score").unwrap_or(FAILURE_SCORE);
                r.best_score = r.initial_score;
                r.best_curve.push((0, r.best_score));
            }
            EventKind::GenRequest => r.generator_requests += 1,
            EventKind::EvalDone => {
                let synthetic = p.get("synthetic").and_then(|s| s.as_bool()).unwrap_or(false);
                if synthetic {
                    r.synthetic_failures += 1;
                } else {
                    r.consumed_evaluations += 1;
                }
                let score = f(p, "score").unwrap_or(FAILURE_SCORE);
                let failed = p
                    .get("error_class")
                    .and_then(|c| c.as_str())
                    .is_some_and(|c| c != "none");
                if let (Some(t), false) = (e.trajectory_id, failed) {
                    let slot = r.trajectory_best.entry(t).or_insert(score);
                    *slot = slot.max(score);
                }
                let id = e.node_id.unwrap_or(NodeId::INITIAL);
                if !failed && (score > r.best_score || (score == r.best_score && id < r.best_node_id)) {
                    if score > r.best_score {
                        r.best_curve.push((r.consumed_evaluations, score));
                    }
                    r.best_score = score;
                    r.best_node_id = id;
                }
            }
            EventKind::Commit => r.commits += 1,
            EventKind::Prune => {
                r.prunes.push(PruneSummary {
                    at_depth: u(p, "at_depth").unwrap_or(0) as u32,
                    kept: ids(p, "kept"),
                    pruned: ids(p, "pruned"),
                });
                if let Some(n) = u(p, "planned_evaluations") {
                    r.planned_evaluations = n;
                }
            }
            EventKind::Finish => {
                r.status = p.get("status").and_then(|s| s.as_str()).unwrap_or("completed").to_string();
            }
            EventKind::Restart | EventKind::GenResponse | EventKind::EvalStart => {}
        }
    }
    order.into_iter().filter_map(|id| by_run.remove(&id)).collect()
}

/// Plain-text summary, one section per run, with the change between
/// consecutive runs.
pub fn render_report(reports: &[RunReport]) -> String {
    let mut out = String::new();
    let mut prev: Option<f64> = None;
    for r in reports {
        out.push_str(&format!("run {} (restart {}): {}\n", r.run_id, r.restart_index, r.status));
        out.push_str(&format!("  initial score   {}\n", r.initial_score));
        out.push_str(&format!("  best score      {} (node {})\n", r.best_score, r.best_node_id));
        out.push_str(&format!(
            "  evaluations     {} of {} planned, {} synthetic failures\n",
            r.consumed_evaluations, r.planned_evaluations, r.synthetic_failures
        ));
        out.push_str(&format!("  generator calls {}\n  commits         {}\n", r.generator_requests, r.commits));
        for p in &r.prunes {
            out.push_str(&format!(
                "  pruned at depth {}: kept {}, dropped {}\n",
                p.at_depth,
                p.kept.len(),
                p.pruned.len()
            ));
        }
        if let Some(b) = prev {
            out.push_str(&format!("  change from previous run {:+}\n", r.best_score - b));
        }
        prev = Some(r.best_score);
    }
    out
}

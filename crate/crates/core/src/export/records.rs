use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::model::{NodeId, FAILURE_SCORE};
use crate::scheduler::{Event, EventKind};

/// One committed step of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub step: u32,
    pub node_id: NodeId,
    /// Fully rendered proposal text.
    pub prompt: Option<String>,
    /// Raw generator output for the committed candidate.
    pub response: Option<String>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub task_id: String,
    /// `<run id>/<trajectory index>`, unique across runs.
    pub trajectory_id: String,
    /// Committed nodes in commit order.
    pub nodes: Vec<NodeRecord>,
    pub max_score: f64,
    pub iteration: u32,
}

impl TrajectoryRecord {
    pub fn new(task_id: String, trajectory_id: String, nodes: Vec<NodeRecord>, iteration: u32) -> Self {
        let max_score = nodes.iter().map(|n| n.score).fold(FAILURE_SCORE, f64::max);
        Self {
            task_id,
            trajectory_id,
            nodes,
            max_score,
            iteration,
        }
    }
}

fn str_of(v: &serde_json::Value, key: &str) -> Option<String> {
    v.get(key).and_then(|s| s.as_str()).map(str::to_string)
}

/// Rebuilds one record per trajectory that committed at least once.
/// Records come out ordered by run (first appearance) then trajectory.
pub fn records_from_events(events: &[Event], iteration: u32) -> Vec<TrajectoryRecord> {
    let mut run_order: Vec<String> = Vec::new();
    let mut tasks: BTreeMap<&str, String> = BTreeMap::new();
    let mut prompts: BTreeMap<(&str, u32, u64), String> = BTreeMap::new();
    let mut responses: BTreeMap<(&str, NodeId), String> = BTreeMap::new();
    let mut commits: BTreeMap<(&str, u32), Vec<(u32, NodeId, f64)>> = BTreeMap::new();
    for e in events {
        let run = e.run_id.as_str();
        if !run_order.iter().any(|r| r == run) {
            run_order.push(e.run_id.clone());
        }
        let p = &e.payload;
        let proposal = str_of(p, "purpose").is_none_or(|s| s == "proposal");
        match e.kind {
            EventKind::Setup => {
                tasks.insert(run, str_of(p, "task_id").unwrap_or_default());
            }
            EventKind::GenRequest if proposal => {
                if let (Some(t), Some(d), Some(prompt)) =
                    (e.trajectory_id, p.get("depth").and_then(|d| d.as_u64()), str_of(p, "prompt"))
                {
                    prompts.insert((run, t, d), prompt);
                }
            }
            EventKind::GenResponse if proposal => {
                let ids: Vec<NodeId> = p
                    .get("node_ids")
                    .and_then(|a| serde_json::from_value(a.clone()).ok())
                    .unwrap_or_default();
                let texts: Vec<String> = p
                    .get("candidates")
                    .and_then(|a| serde_json::from_value(a.clone()).ok())
                    .unwrap_or_default();
                for (id, text) in ids.into_iter().zip(texts) {
                    responses.insert((run, id), text);
                }
            }
            EventKind::Commit => {
                if let (Some(t), Some(id)) = (e.trajectory_id, e.node_id) {
                    let step = p.get("depth").and_then(|d| d.as_u64()).unwrap_or(0) as u32;
                    let score = p.get("score").and_then(|s| s.as_f64()).unwrap_or(FAILURE_SCORE);
                    commits.entry((run, t)).or_default().push((step, id, score));
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    for run in &run_order {
        let task = tasks.get(run.as_str()).cloned().unwrap_or_default();
        for ((r, t), steps) in commits.range((run.as_str(), 0)..=(run.as_str(), u32::MAX)) {
            let nodes = steps
                .iter()
                .map(|&(step, id, score)| NodeRecord {
                    step,
                    node_id: id,
                    // The step-th commit came from the batch at depth step - 1.
                    prompt: prompts.get(&(*r, *t, step.saturating_sub(1) as u64)).cloned(),
                    response: responses.get(&(*r, id)).cloned(),
                    score,
                })
                .collect();
            out.push(TrajectoryRecord::new(task.clone(), format!("{run}/{t}"), nodes, iteration));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub task_id: String,
    pub trajectory_id: String,
    pub step: u32,
    pub prompt: String,
    pub response: String,
    pub weight: u8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub rows: u64,
    pub kept_trajectories: u64,
    pub total_trajectories: u64,
    /// Nodes without a prompt or response.
    pub skipped_rows: u64,
}

/// Writes one row per node of every trajectory with a weight (zero-weight
/// trajectories only when `include_zero`). Trajectories missing from
/// `credits` get weight 0.
pub fn export_dataset<W: Write>(
    records: &[TrajectoryRecord],
    credits: &BTreeMap<String, u8>,
    include_zero: bool,
    out: &mut W,
) -> io::Result<ExportSummary> {
    let mut s = ExportSummary {
        total_trajectories: records.len() as u64,
        ..ExportSummary::default()
    };
    for r in records {
        let weight = credits.get(&r.trajectory_id).copied().unwrap_or(0);
        if weight == 1 {
            s.kept_trajectories += 1;
        }
        if weight == 0 && !include_zero {
            continue;
        }
        for n in &r.nodes {
            let (Some(prompt), Some(response)) = (&n.prompt, &n.response) else {
                warn!(trajectory = %r.trajectory_id, step = n.step, "node lacks a prompt or response, skipped");
                s.skipped_rows += 1;
                continue;
            };
            let row = DatasetRow {
                task_id: r.task_id.clone(),
                trajectory_id: r.trajectory_id.clone(),
                step: n.step,
                prompt: prompt.clone(),
                response: response.clone(),
                weight,
            };
            serde_json::to_writer(&mut *out, &row).map_err(io::Error::other)?;
            out.write_all(b"\n")?;
            s.rows += 1;
        }
    }
    Ok(s)
}

pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRow>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

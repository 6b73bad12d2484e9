use std::collections::BTreeMap;

use super::TrajectoryRecord;

/// `ceil(r_percent / 100 * n)`, guarded against representation error so
/// that for example 7% of 100 is 7, not 8. At least 1 when `n > 0`.
pub fn kept_count(r_percent: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let exact = r_percent * n as f64 / 100.0;
    ((exact - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// Weight 1 for the top `r_percent` of trajectories by peak score, else 0.
///
/// With `per_task` the ranking runs within each task. Every trajectory
/// tied with the boundary score is kept too, so a group may keep more than
/// [`kept_count`].
pub fn assign_credit_irft(records: &[TrajectoryRecord], r_percent: f64, per_task: bool) -> BTreeMap<String, u8> {
    let mut groups: BTreeMap<&str, Vec<&TrajectoryRecord>> = BTreeMap::new();
    for r in records {
        let key = if per_task { r.task_id.as_str() } else { "" };
        groups.entry(key).or_default().push(r);
    }
    let mut weights = BTreeMap::new();
    for (_, mut group) in groups {
        group.sort_by(|a, b| b.max_score.total_cmp(&a.max_score));
        let k = kept_count(r_percent, group.len());
        let threshold = group[k - 1].max_score;
        for r in group {
            weights.insert(r.trajectory_id.clone(), u8::from(r.max_score >= threshold));
        }
    }
    weights
}

/// Drops every node after the first one reaching the peak score.
pub fn truncate_after_peak(record: &TrajectoryRecord) -> TrajectoryRecord {
    let mut out = record.clone();
    let peak = out.nodes.iter().map(|n| n.score).fold(f64::NEG_INFINITY, f64::max);
    if let Some(i) = out.nodes.iter().position(|n| n.score == peak) {
        out.nodes.truncate(i + 1);
    }
    out
}

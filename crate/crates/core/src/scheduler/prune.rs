use thiserror::Error;

use crate::model::{RunState, TrajectoryStatus};

use super::Cutoff;

#[derive(Debug, Error, PartialEq)]
pub enum PruneError {
    #[error("trajectory {trajectory} is at depth {depth}, the cutoff needs every active trajectory at {at_depth}")]
    NotAtBarrier { trajectory: u32, depth: u32, at_depth: u32 },
}

/// Keeps the best `ceil(keep_fraction * active)` active trajectories and
/// prunes the rest. Trajectories rank by best committed score, ties to the
/// lower id. Returns the pruned ids in ascending order.
///
/// The removed budget, `(L - at_depth) * K` per pruned trajectory, is taken
/// off the plan.
pub fn apply_prune(state: &mut RunState, cutoff: Cutoff) -> Result<Vec<u32>, PruneError> {
    let active: Vec<usize> = state
        .trajectories
        .iter()
        .enumerate()
        .filter(|(_, t)| t.status == TrajectoryStatus::Active)
        .map(|(i, _)| i)
        .collect();
    for &i in &active {
        let t = &state.trajectories[i];
        if t.depth != cutoff.at_depth {
            return Err(PruneError::NotAtBarrier {
                trajectory: t.trajectory_id,
                depth: t.depth,
                at_depth: cutoff.at_depth,
            });
        }
    }
    let keep = ((active.len() as f64 * cutoff.keep_fraction).ceil() as usize).clamp(1, active.len().max(1));
    let mut ranked = active.clone();
    ranked.sort_by(|&a, &b| {
        let (ta, tb) = (&state.trajectories[a], &state.trajectories[b]);
        tb.best_committed_score()
            .total_cmp(&ta.best_committed_score())
            .then(ta.trajectory_id.cmp(&tb.trajectory_id))
    });
    let mut pruned: Vec<u32> = ranked
        .iter()
        .skip(keep)
        .map(|&i| {
            state.trajectories[i].status = TrajectoryStatus::Pruned;
            state.trajectories[i].trajectory_id
        })
        .collect();
    pruned.sort_unstable();
    let per = (state.config.depth - cutoff.at_depth) as u64 * state.config.samples as u64;
    let removed = per * pruned.len() as u64;
    state.ledger.planned_evaluations -= removed;
    state.ledger.pruned_evaluations += removed;
    state.cutoffs_applied += 1;
    Ok(pruned)
}

//! Graph PUCT over a trajectory's inspiration DAG.
//!
//! A node's propagated value is the larger of its own score and the
//! discounted best value among the nodes it inspired. Selection adds a
//! bonus proportional to the node's score rank that decays with how often
//! it has already been shown: `U + lambda * rho * sqrt(1 + |S|) / (1 + n)`.

use std::collections::HashMap;

use crate::model::{Node, NodeId};

use super::SelectorConfig;

/// Children of each history position (nodes that list it as a parent).
pub fn children_of(history: &[Node]) -> Vec<Vec<usize>> {
    let index: HashMap<NodeId, usize> = history.iter().enumerate().map(|(i, n)| (n.node_id, i)).collect();
    let mut children = vec![Vec::new(); history.len()];
    for (j, node) in history.iter().enumerate() {
        for p in &node.inspiration_parents {
            if let Some(&i) = index.get(p) {
                if !children[i].contains(&j) {
                    children[i].push(j);
                }
            }
        }
    }
    children
}

/// Propagated value of every history position.
///
/// Parents always precede children in `history`, so one reverse sweep
/// reaches the fixed point.
pub fn propagate_values(history: &[Node], gamma: f64) -> Vec<f64> {
    let children = children_of(history);
    let mut u = vec![0.0; history.len()];
    for i in (0..history.len()).rev() {
        let own = history[i].score;
        let best_child = children[i].iter().map(|&j| u[j]).fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        });
        u[i] = match best_child {
            Some(c) => own.max(gamma * c),
            None => own,
        };
    }
    u
}

/// Score rank of each position in `[0, 1]`: the share of other valid nodes
/// scoring strictly lower. Failed nodes get 0 and are not counted.
pub fn percentile_ranks(history: &[Node]) -> Vec<f64> {
    let valid: Vec<f64> = history.iter().filter(|n| !n.is_failure()).map(|n| n.score).collect();
    history
        .iter()
        .map(|n| {
            if n.is_failure() {
                0.0
            } else if valid.len() == 1 {
                1.0
            } else {
                let lower = valid.iter().filter(|&&s| s < n.score).count();
                lower as f64 / (valid.len() - 1) as f64
            }
        })
        .collect()
}

pub fn rpucg_score(u: f64, rho: f64, history_size: usize, selection_count: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return u;
    }
    u + lambda * rho * ((1 + history_size) as f64).sqrt() / (1 + selection_count) as f64
}

/// RPUCG score of every history position.
pub fn rpucg_scores(history: &[Node], config: &SelectorConfig) -> Vec<f64> {
    let u = propagate_values(history, config.rpucg_gamma);
    let rho = percentile_ranks(history);
    history
        .iter()
        .enumerate()
        .map(|(i, n)| rpucg_score(u[i], rho[i], history.len(), n.selection_count, config.rpucg_lambda))
        .collect()
}

/// Greedy picks by descending score. Each pick makes its parents and
/// children ineligible. Ties go to the earlier node.
pub fn select_inspirations_rpucg(history: &mut [Node], config: &SelectorConfig) -> Vec<NodeId> {
    let scores = rpucg_scores(history, config);
    let children = children_of(history);
    let index: HashMap<NodeId, usize> = history.iter().enumerate().map(|(i, n)| (n.node_id, i)).collect();
    let mut eligible = vec![true; history.len()];
    let mut picks = Vec::new();
    while picks.len() < config.insp_count {
        let mut best: Option<usize> = None;
        for i in (0..history.len()).filter(|&i| eligible[i]) {
            if best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        eligible[b] = false;
        for &c in &children[b] {
            eligible[c] = false;
        }
        for p in &history[b].inspiration_parents {
            if let Some(&i) = index.get(p) {
                eligible[i] = false;
            }
        }
        picks.push(b);
    }
    for &i in &picks {
        history[i].selection_count += 1;
    }
    picks.into_iter().map(|i| history[i].node_id).collect()
}

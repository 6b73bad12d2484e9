//! The proposal constructor: which past nodes a trajectory shows the
//! generator next, and how the prompt is laid out.
//!
//! Every selector reads one trajectory's history (its initial node plus the
//! nodes it committed) and returns node ids from that history only.

pub mod balance;
pub mod elite;
pub mod proposal;
pub mod random;
pub mod rpucg;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Node, NodeId};

pub use balance::{select_inspirations_balance, BalanceDraw, BalanceTiers, Tier};
pub use elite::{
    apply_decision, elite_pool_update, elite_prompt, overrides, parse_elite_decision, DecisionProvider,
    EliteDecision, ElitePool, ScriptedDecisions,
};
pub use proposal::{
    build_proposal, parse_rendered, render, InspirationEntry, ParsedAttempt, ParsedProposal, ProposalBundle,
    Signals, SECTION_ATTEMPTS, SECTION_EVALUATION, SECTION_INSTRUCTION, SECTION_SIGNALS,
};
pub use random::select_inspirations_random;
pub use rpucg::{
    children_of, percentile_ranks, propagate_values, rpucg_score, rpucg_scores, select_inspirations_rpucg,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    #[default]
    Rpucg,
    Balance,
    Random,
    LlmElite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub insp_count: usize,
    /// Exploration weight of the RPUCG bonus.
    pub rpucg_lambda: f64,
    /// Discount applied to descendants' values during propagation.
    pub rpucg_gamma: f64,
    pub balance_tiers: BalanceTiers,
    pub elite_capacity: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            insp_count: 3,
            rpucg_lambda: 1.0,
            rpucg_gamma: 0.8,
            balance_tiers: BalanceTiers::default(),
            elite_capacity: 8,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.insp_count == 0 {
            return Err("insp_count must be positive".into());
        }
        if !(self.rpucg_lambda.is_finite() && self.rpucg_lambda >= 0.0) {
            return Err(format!("rpucg_lambda must be non-negative, got {}", self.rpucg_lambda));
        }
        if !(self.rpucg_gamma > 0.0 && self.rpucg_gamma <= 1.0) {
            return Err(format!("rpucg_gamma must be in (0, 1], got {}", self.rpucg_gamma));
        }
        if self.elite_capacity == 0 {
            return Err("elite_capacity must be positive".into());
        }
        self.balance_tiers.validate()
    }
}

/// Picks inspirations for one proposal and bumps their selection counts.
///
/// `history` is the trajectory's visible history; `elite` is its pool, used
/// only by the elite policy.
pub fn select_inspirations<R: Rng + ?Sized>(
    kind: SelectorKind,
    history: &mut [Node],
    elite: &ElitePool,
    config: &SelectorConfig,
    rng: &mut R,
) -> Vec<NodeId> {
    let picks = match kind {
        SelectorKind::Rpucg => return select_inspirations_rpucg(history, config),
        SelectorKind::Balance => {
            select_inspirations_balance(history, config.insp_count, &config.balance_tiers, rng).picks
        }
        SelectorKind::Random => select_inspirations_random(history, config.insp_count, rng),
        SelectorKind::LlmElite => {
            let pool: Vec<Node> = elite
                .members
                .iter()
                .filter(|m| history.iter().any(|h| h.node_id == m.node_id))
                .cloned()
                .collect();
            if pool.is_empty() {
                select_inspirations_balance(history, config.insp_count, &config.balance_tiers, rng).picks
            } else {
                select_inspirations_balance(&pool, config.insp_count, &config.balance_tiers, rng).picks
            }
        }
    };
    for id in &picks {
        if let Some(n) = history.iter_mut().find(|n| n.node_id == *id) {
            n.selection_count += 1;
        }
    }
    picks
}

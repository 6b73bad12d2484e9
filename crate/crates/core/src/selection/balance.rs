//! Stratified sampling over the score-sorted history.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ranks_above, Node, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceTiers {
    /// Share of the sorted history forming the exploitation tier.
    pub elite_fraction: f64,
    /// Rank band (percent from the top) of the exploration tier.
    pub explore_lo_percentile: f64,
    pub explore_hi_percentile: f64,
    pub p_exploit: f64,
    pub p_explore: f64,
}

impl Default for BalanceTiers {
    fn default() -> Self {
        Self {
            elite_fraction: 0.25,
            explore_lo_percentile: 10.0,
            explore_hi_percentile: 60.0,
            p_exploit: 0.5,
            p_explore: 0.3,
        }
    }
}

impl BalanceTiers {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err("elite_fraction must be in (0, 1]".into());
        }
        if !unit(self.p_exploit) || !unit(self.p_explore) || self.p_exploit + self.p_explore > 1.0 {
            return Err("p_exploit and p_explore must be probabilities summing to at most 1".into());
        }
        let (lo, hi) = (self.explore_lo_percentile, self.explore_hi_percentile);
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
            return Err("explore band needs 0 <= lo < hi <= 100".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    /// The forced inclusion of the best node.
    Best,
    Exploit,
    Explore,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceDraw {
    pub picks: Vec<NodeId>,
    /// Tier drawn for each pick (`picks[0]` is always [`Tier::Best`]).
    pub tiers: Vec<Tier>,
}

/// Always includes the best node, then fills `n - 1` slots without
/// replacement. Each slot draws a tier (exploit with `p_exploit`, explore
/// with `p_explore`, otherwise the whole history) and a uniform member of
/// it; a tier with nothing left falls back to the whole history.
pub fn select_inspirations_balance<R: Rng + ?Sized>(
    history: &[Node],
    n: usize,
    tiers: &BalanceTiers,
    rng: &mut R,
) -> BalanceDraw {
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| {
        if ranks_above(&history[a], &history[b]) {
            std::cmp::Ordering::Less
        } else if ranks_above(&history[b], &history[a]) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    let size = order.len();
    let mut draw = BalanceDraw {
        picks: Vec::new(),
        tiers: Vec::new(),
    };
    if n == 0 || size == 0 {
        return draw;
    }

    // Tier bounds as rank positions in the sorted order.
    let exploit_end = ((tiers.elite_fraction * size as f64).ceil() as usize).clamp(1, size);
    let lo = (tiers.explore_lo_percentile / 100.0 * size as f64).floor() as usize;
    let hi = ((tiers.explore_hi_percentile / 100.0 * size as f64).ceil() as usize).min(size);

    let mut taken = vec![false; size];
    taken[0] = true;
    draw.picks.push(history[order[0]].node_id);
    draw.tiers.push(Tier::Best);

    while draw.picks.len() < n.min(size) {
        let u: f64 = rng.random();
        let tier = if u < tiers.p_exploit {
            Tier::Exploit
        } else if u < tiers.p_exploit + tiers.p_explore {
            Tier::Explore
        } else {
            Tier::Random
        };
        let range = match tier {
            Tier::Exploit => 0..exploit_end,
            Tier::Explore => lo..hi,
            _ => 0..size,
        };
        let mut open: Vec<usize> = range.filter(|&r| !taken[r]).collect();
        if open.is_empty() {
            open = (0..size).filter(|&r| !taken[r]).collect();
        }
        let &rank = open.choose(rng).expect("slots remain");
        taken[rank] = true;
        draw.picks.push(history[order[rank]].node_id);
        draw.tiers.push(tier);
    }
    draw
}

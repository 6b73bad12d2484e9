use rand::Rng;

use crate::model::{Node, NodeId};

/// Uniform sample of `min(n, |history|)` distinct nodes, in random order.
pub fn select_inspirations_random<R: Rng + ?Sized>(history: &[Node], n: usize, rng: &mut R) -> Vec<NodeId> {
    let amount = n.min(history.len());
    rand::seq::index::sample(rng, history.len(), amount)
        .into_iter()
        .map(|i| history[i].node_id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::EvalOutcome;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sizes() {
        let h: Vec<Node> = (0..4)
            .map(|i| Node::from_outcome(NodeId(i), Some(0), String::new(), &EvalOutcome::scored(0.0), vec![], 0, 0))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(select_inspirations_random(&h, 0, &mut rng).is_empty());
        let mut all = select_inspirations_random(&h, 4, &mut rng);
        all.sort();
        assert_eq!(all, h.iter().map(|n| n.node_id).collect::<Vec<_>>());
        assert_eq!(select_inspirations_random(&h, 9, &mut rng).len(), 4);
    }
}

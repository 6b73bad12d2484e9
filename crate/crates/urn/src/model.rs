//! The refinement urn itself: bottleneck score and per-step selection law.

use serde::{Deserialize, Serialize};

/// Per-dimension refinement counts after `t` steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrnState {
    pub y: Vec<u64>,
    pub t: u64,
}

impl UrnState {
    pub fn new(dimensions: usize) -> Self {
        Self {
            y: vec![0; dimensions],
            t: 0,
        }
    }

    /// Number of refinements actually applied so far.
    pub fn refinements(&self) -> u64 {
        self.y.iter().sum()
    }
}

/// Bottleneck score `1 - lambda^(min_d y_d)`.
pub fn urn_score(y: &[u64], lambda: f64) -> f64 {
    let min = y.iter().copied().min().unwrap_or(0);
    1.0 - lambda.powf(min as f64)
}

/// Law of the dimension drawn at step `t`.
///
/// Dimension `d` is drawn with weight `1 + beta * y_d` out of a total of
/// `D + beta * (t - 1)`. When every earlier step applied a refinement the
/// dimension weights exhaust the total and `stall` is zero. Steps whose
/// proposals all failed still advance `t`, and the weight they would have
/// carried is left unassigned: with probability `stall` no dimension is
/// selected and the step is consumed without a refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub dims: Vec<f64>,
    pub stall: f64,
}

impl StepDistribution {
    pub fn total(&self) -> f64 {
        self.dims.iter().sum::<f64>() + self.stall
    }
}

pub fn urn_step_probs(y: &[u64], beta: f64, t: u64) -> StepDistribution {
    assert!(t >= 1, "steps are numbered from 1");
    let d = y.len() as f64;
    let applied: u64 = y.iter().sum();
    debug_assert!(applied <= t - 1);
    let denom = d + beta * (t - 1) as f64;
    let dims: Vec<f64> = y.iter().map(|&yd| (1.0 + beta * yd as f64) / denom).collect();
    let stall = beta * (t - 1 - applied) as f64 / denom;
    StepDistribution { dims, stall }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vector_scores_zero() {
        assert_eq!(urn_score(&[0, 0, 0], 0.7), 0.0);
    }

    #[test]
    fn single_dimension_closed_form() {
        let lambda: f64 = 0.9;
        assert!((urn_score(&[12], lambda) - (1.0 - lambda.powi(12))).abs() < 1e-15);
    }

    #[test]
    fn bottleneck_uses_minimum() {
        assert_eq!(urn_score(&[3, 5], 0.5), 0.875);
    }

    #[test]
    fn beta_zero_is_uniform() {
        for t in 1..6 {
            let y = [t - 1, 0, 0, 0];
            let dist = urn_step_probs(&y, 0.0, t);
            for p in dist.dims {
                assert_eq!(p, 0.25);
            }
            assert_eq!(dist.stall, 0.0);
        }
    }

    #[test]
    fn first_step_is_uniform() {
        let dist = urn_step_probs(&[0, 0, 0], 4.0, 1);
        assert_eq!(dist.dims, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn plug_in_matches_rational_oracle() {
        // D=2, beta=4, y=[3,0], t=4: numerators 13 and 1 over 2 + 4*3 = 14.
        let dist = urn_step_probs(&[3, 0], 4.0, 4);
        assert_eq!(dist.dims, vec![13.0 / 14.0, 1.0 / 14.0]);
        assert_eq!(dist.stall, 0.0);
    }

    #[test]
    fn failed_steps_carry_stall_mass() {
        // Three steps taken, one refinement applied.
        let dist = urn_step_probs(&[1, 0], 2.0, 4);
        assert_eq!(dist.dims, vec![3.0 / 8.0, 1.0 / 8.0]);
        assert_eq!(dist.stall, 4.0 / 8.0);
        assert!((dist.total() - 1.0).abs() < 1e-15);
    }
}

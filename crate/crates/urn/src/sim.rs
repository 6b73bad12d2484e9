//! Monte-Carlo simulation of refinement chains and of best-of-`C` ensembles.
//!
//! Every chain owns a ChaCha8 stream addressed by `(simulation, chain)`, so
//! an ensemble with more chains extends a smaller one with the same seed
//! instead of resampling it. That makes width comparisons paired.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{UrnConfig, UrnConfigError};
use crate::model::{urn_score, UrnState};

const CHAIN_BITS: u32 = 24;

/// Generator for chain `chain` of simulation `sim`.
pub fn chain_rng(seed: u64, sim: usize, chain: usize) -> ChaCha8Rng {
    debug_assert!((chain as u64) < (1 << CHAIN_BITS));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((sim as u64) << CHAIN_BITS) | chain as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub state: UrnState,
    /// Score after each step; empty unless a trace was requested.
    pub trace: Vec<f64>,
    /// Steps on which the drawn dimension was actually refined.
    pub successes: u64,
    /// Steps on which a dimension was drawn (refined or not).
    pub draws: u64,
}

/// Runs one chain of `config.steps` steps.
pub fn simulate_chain<R: Rng + ?Sized>(config: &UrnConfig, rng: &mut R) -> ChainOutcome {
    run_chain(config, rng, true)
}

pub(crate) fn run_chain<R: Rng + ?Sized>(
    config: &UrnConfig,
    rng: &mut R,
    keep_trace: bool,
) -> ChainOutcome {
    let dims = config.dimensions;
    let beta = config.beta;
    let success = config.step_success_prob();
    let mut state = UrnState::new(dims);
    let mut trace = Vec::with_capacity(if keep_trace { config.steps as usize } else { 0 });
    let mut applied: u64 = 0;
    let mut successes = 0;
    let mut draws = 0;

    for t in 1..=config.steps {
        let total = dims as f64 + beta * (t - 1) as f64;
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (d, &yd) in state.y.iter().enumerate() {
            acc += 1.0 + beta * yd as f64;
            if u < acc {
                chosen = Some(d);
                break;
            }
        }
        // Rounding can push `u` past the last boundary when no mass is stalled.
        if chosen.is_none() && applied == t - 1 {
            chosen = Some(dims - 1);
        }
        if let Some(d) = chosen {
            draws += 1;
            if rng.random::<f64>() < success {
                state.y[d] += 1;
                applied += 1;
                successes += 1;
            }
        }
        state.t = t;
        if keep_trace {
            trace.push(urn_score(&state.y, config.lambda));
        }
    }

    ChainOutcome {
        state,
        trace,
        successes,
        draws,
    }
}

/// Summary of an ensemble: per simulation, the best final score over its chains.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleStats {
    pub chains: usize,
    pub num_sims: usize,
    pub best_scores: Vec<f64>,
    pub mean_best_score: f64,
    /// Sample standard deviation of `best_scores`.
    pub std_best_score: f64,
}

impl EnsembleStats {
    fn from_scores(chains: usize, best_scores: Vec<f64>) -> Self {
        let n = best_scores.len();
        let mean = best_scores.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            best_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            chains,
            num_sims: n,
            best_scores,
            mean_best_score: mean,
            std_best_score: var.sqrt(),
        }
    }

    /// Standard error of the mean best score.
    pub fn std_error(&self) -> f64 {
        self.std_best_score / (self.num_sims as f64).sqrt()
    }

    /// Fraction of simulations whose best chain falls short of `target`.
    pub fn failure_rate(&self, target: f64) -> f64 {
        let fails = self.best_scores.iter().filter(|&&s| s < target).count();
        fails as f64 / self.num_sims as f64
    }
}

/// Final score of every chain of every simulation, `[sim][chain]`.
pub fn simulate_chain_scores(config: &UrnConfig) -> Result<Vec<Vec<f64>>, UrnConfigError> {
    config.validate()?;
    let scores = (0..config.num_sims)
        .into_par_iter()
        .map(|sim| {
            (0..config.chains)
                .map(|chain| {
                    let mut rng = chain_rng(config.seed, sim, chain);
                    let outcome = run_chain(config, &mut rng, false);
                    urn_score(&outcome.state.y, config.lambda)
                })
                .collect()
        })
        .collect();
    Ok(scores)
}

pub fn simulate_ensemble(config: &UrnConfig) -> Result<EnsembleStats, UrnConfigError> {
    let per_chain = simulate_chain_scores(config)?;
    let best = per_chain
        .iter()
        .map(|chains| chains.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(EnsembleStats::from_scores(config.chains, best))
}

/// Empirical failure rate of best-of-`C` for every `C` in `1..=config.chains`,
/// using the first `C` chains of each simulation.
pub fn failure_curve(config: &UrnConfig, target: f64) -> Result<Vec<f64>, UrnConfigError> {
    let per_chain = simulate_chain_scores(config)?;
    let n = per_chain.len() as f64;
    let mut fails = vec![0usize; config.chains];
    for chains in &per_chain {
        let mut best = f64::NEG_INFINITY;
        for (c, &s) in chains.iter().enumerate() {
            best = best.max(s);
            if best < target {
                fails[c] += 1;
            }
        }
    }
    Ok(fails.into_iter().map(|f| f as f64 / n).collect())
}

/// Smallest width whose empirical failure rate at `target` is at most `epsilon`,
/// searched up to `config.chains`.
pub fn minimal_width(
    config: &UrnConfig,
    target: f64,
    epsilon: f64,
) -> Result<Option<usize>, UrnConfigError> {
    let curve = failure_curve(config, target)?;
    Ok(curve.iter().position(|&f| f <= epsilon).map(|i| i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(k: u32, p: f64) -> UrnConfig {
        UrnConfig {
            dimensions: 3,
            lambda: 0.9,
            beta: 2.0,
            steps: 200,
            chains: 4,
            local_k: k,
            improve_prob: p,
            num_sims: 64,
            seed: 7,
        }
    }

    #[test]
    fn certain_improvement_refines_every_step() {
        let cfg = small(3, 1.0);
        let out = simulate_chain(&cfg, &mut chain_rng(1, 0, 0));
        assert_eq!(out.state.refinements(), cfg.steps);
        assert_eq!(out.successes, cfg.steps);
        assert_eq!(out.state.t, cfg.steps);
    }

    #[test]
    fn impossible_improvement_never_moves() {
        let cfg = small(8, 0.0);
        let out = simulate_chain(&cfg, &mut chain_rng(1, 0, 0));
        assert!(out.state.y.iter().all(|&v| v == 0));
        assert!(out.trace.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn trace_is_nondecreasing() {
        let cfg = small(2, 0.4);
        for sim in 0..10 {
            let out = simulate_chain(&cfg, &mut chain_rng(3, sim, 0));
            assert_eq!(out.trace.len() as u64, cfg.steps);
            assert!(out.trace.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn single_dimension_matches_closed_form() {
        let cfg = UrnConfig {
            dimensions: 1,
            ..small(1, 1.0)
        };
        let stats = simulate_ensemble(&cfg).unwrap();
        let expected = 1.0 - cfg.lambda.powi(cfg.steps as i32);
        for s in &stats.best_scores {
            assert!((s - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn ensembles_are_reproducible() {
        let cfg = small(2, 0.5);
        let a = simulate_ensemble(&cfg).unwrap();
        let b = simulate_ensemble(&cfg).unwrap();
        assert_eq!(a.best_scores, b.best_scores);
    }

    #[test]
    fn wider_ensembles_dominate_pairwise() {
        let narrow = small(2, 0.5);
        let wide = UrnConfig {
            chains: 8,
            ..narrow.clone()
        };
        let a = simulate_ensemble(&narrow).unwrap();
        let b = simulate_ensemble(&wide).unwrap();
        for (x, y) in a.best_scores.iter().zip(&b.best_scores) {
            assert!(y >= x);
        }
    }

    #[test]
    fn failure_curve_is_nonincreasing() {
        let cfg = small(1, 0.7);
        let curve = failure_curve(&cfg, 0.5).unwrap();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    }
}

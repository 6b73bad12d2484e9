//! Fixed-budget trade-off between local sample size and refinement depth.

use std::io::Write;

use serde::Serialize;

use crate::config::{UrnConfig, UrnConfigError};
use crate::sim::simulate_ensemble;

/// One `(p, K)` cell of the allocation table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub p: f64,
    pub k: u32,
    pub steps: u64,
    pub chains: usize,
    pub mean_score: f64,
    pub std: f64,
    pub std_error: f64,
    pub failure_rate: Option<f64>,
    pub n_sims: usize,
    /// `mean_score` divided by the largest mean in the sweep.
    pub normalized_score: f64,
}

/// A `K` that does not divide the proposal budget.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SkippedCell {
    pub p: f64,
    pub k: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    /// Proposals available to each chain; refinement steps are `budget / K`.
    pub budget: u64,
    pub cells: Vec<SweepCell>,
    pub skipped: Vec<SkippedCell>,
}

impl SweepTable {
    pub fn cell(&self, p: f64, k: u32) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.p == p && c.k == k)
    }

    pub fn row(&self, p: f64) -> Vec<&SweepCell> {
        self.cells.iter().filter(|c| c.p == p).collect()
    }

    /// Writes `p,K,steps,chains,mean_score,std,failure_rate,n_sims`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "p",
            "K",
            "steps",
            "chains",
            "mean_score",
            "std",
            "failure_rate",
            "n_sims",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.p.to_string(),
                c.k.to_string(),
                c.steps.to_string(),
                c.chains.to_string(),
                c.mean_score.to_string(),
                c.std.to_string(),
                c.failure_rate.map(|f| f.to_string()).unwrap_or_default(),
                c.n_sims.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs one ensemble per `(p, K)` with `base.steps` proposals per chain.
///
/// `base.local_k` and `base.improve_prob` are overridden per cell. When
/// `target` is given, each cell also reports the best-of-`C` failure rate.
pub fn allocation_sweep(
    base: &UrnConfig,
    k_values: &[u32],
    p_values: &[f64],
    target: Option<f64>,
) -> Result<SweepTable, UrnConfigError> {
    base.validate()?;
    let budget = base.steps;
    let mut cells = Vec::new();
    let mut skipped = Vec::new();

    for &p in p_values {
        for &k in k_values {
            if k == 0 || budget % k as u64 != 0 {
                skipped.push(SkippedCell {
                    p,
                    k,
                    reason: format!("K={k} does not divide the budget {budget}"),
                });
                continue;
            }
            let cfg = UrnConfig {
                steps: budget / k as u64,
                local_k: k,
                improve_prob: p,
                ..base.clone()
            };
            let stats = simulate_ensemble(&cfg)?;
            cells.push(SweepCell {
                p,
                k,
                steps: cfg.steps,
                chains: cfg.chains,
                mean_score: stats.mean_best_score,
                std: stats.std_best_score,
                std_error: stats.std_error(),
                failure_rate: target.map(|s| stats.failure_rate(s)),
                n_sims: stats.num_sims,
                normalized_score: 0.0,
            });
        }
    }

    let max = cells
        .iter()
        .map(|c| c.mean_score)
        .fold(f64::NEG_INFINITY, f64::max);
    for c in &mut cells {
        c.normalized_score = if max > 0.0 { c.mean_score / max } else { 0.0 };
    }

    Ok(SweepTable {
        budget,
        cells,
        skipped,
    })
}

/// Powers of two from 1 up to `max`.
pub fn power_of_two_ks(max: u32) -> Vec<u32> {
    std::iter::successors(Some(1u32), |k| k.checked_mul(2))
        .take_while(|&k| k <= max)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::simulate_ensemble;

    fn base() -> UrnConfig {
        UrnConfig {
            dimensions: 2,
            lambda: 0.9,
            beta: 1.0,
            steps: 64,
            chains: 4,
            num_sims: 32,
            seed: 11,
            ..UrnConfig::default()
        }
    }

    #[test]
    fn non_divisible_cells_are_skipped() {
        let table = allocation_sweep(&base(), &[1, 3, 4], &[0.5], None).unwrap();
        assert_eq!(table.cells.len(), 2);
        assert_eq!(table.skipped.len(), 1);
        assert_eq!(table.skipped[0].k, 3);
    }

    #[test]
    fn k_one_column_is_the_sequential_model() {
        let b = base();
        let table = allocation_sweep(&b, &[1], &[0.6], None).unwrap();
        let direct = simulate_ensemble(&UrnConfig {
            local_k: 1,
            improve_prob: 0.6,
            ..b
        })
        .unwrap();
        assert_eq!(table.cells[0].mean_score, direct.mean_best_score);
        assert_eq!(table.cells[0].steps, 64);
    }

    #[test]
    fn normalization_peaks_at_one() {
        let table = allocation_sweep(&base(), &[1, 2, 4], &[0.5, 1.0], None).unwrap();
        let max = table
            .cells
            .iter()
            .map(|c| c.normalized_score)
            .fold(0.0, f64::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn csv_has_fixed_header() {
        let table = allocation_sweep(&base(), &[2], &[0.5], Some(0.3)).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "p,K,steps,chains,mean_score,std,failure_rate,n_sims"
        );
        assert!(lines.next().unwrap().starts_with("0.5,2,32,4,"));
    }

    #[test]
    fn powers_of_two() {
        assert_eq!(power_of_two_ks(16), vec![1, 2, 4, 8, 16]);
        assert_eq!(power_of_two_ks(12), vec![1, 2, 4, 8]);
    }
}

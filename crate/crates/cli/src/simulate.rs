//! `simulate`: urn ensembles and the local-batch allocation sweep.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;

use evalscale_urn::{allocation_sweep, chain_rng, failure_curve, simulate_chain, UrnConfig};

use crate::overrides::{layered, no_alias};

#[derive(Args)]
pub struct SimulateArgs {
    /// Urn configuration file (JSON); defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` applied after the file and the environment. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// 4096 proposals per chain, beta 4, 32 chains, 2048 simulations.
    #[arg(long)]
    pub figure_preset: bool,
    /// Local sample sizes to sweep; each must divide the proposal budget.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    pub k_values: Vec<u32>,
    /// Per-proposal success probabilities; defaults to the config's.
    #[arg(long, value_delimiter = ',')]
    pub p_values: Vec<f64>,
    /// Also report best-of-C failure rates below this score.
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<u8> {
    let (mut config, provenance): (UrnConfig, _) = layered(args.config.as_deref(), &args.overrides, no_alias)?;
    if args.figure_preset {
        config = config.with_figure_preset();
    }
    config.validate()?;
    let p_values = if args.p_values.is_empty() { vec![config.improve_prob] } else { args.p_values.clone() };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let table = allocation_sweep(&config, &args.k_values, &p_values, args.target)?;
    let csv_path = args.out.join("allocation.csv");
    table
        .write_csv(fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?)
        .context("writing allocation.csv")?;

    let mut best_k = Vec::new();
    for &p in &p_values {
        let row = table.row(p);
        if let Some(best) = row.iter().max_by(|a, b| a.mean_score.total_cmp(&b.mean_score)) {
            println!("p={p}: best K={} mean {:.6} (se {:.6})", best.k, best.mean_score, best.std_error);
            best_k.push(json!({"p": p, "k": best.k, "mean_score": best.mean_score}));
        }
    }
    for s in &table.skipped {
        println!("skipped p={} K={}: {}", s.p, s.k, s.reason);
    }

    if config.num_sims == 1 {
        let cfg = UrnConfig { local_k: 1, ..config.clone() };
        let trace = simulate_chain(&cfg, &mut chain_rng(cfg.seed, 0, 0)).trace;
        let mut w = csv::Writer::from_path(args.out.join("trace.csv"))?;
        w.write_record(["step", "score"])?;
        for (i, s) in trace.iter().enumerate() {
            w.write_record([(i + 1).to_string(), s.to_string()])?;
        }
        w.flush()?;
    }
    let failure = match args.target {
        Some(target) => {
            let curve = failure_curve(&config, target)?;
            let mut w = csv::Writer::from_path(args.out.join("failure_curve.csv"))?;
            w.write_record(["chains", "failure_rate"])?;
            for (i, f) in curve.iter().enumerate() {
                w.write_record([(i + 1).to_string(), f.to_string()])?;
            }
            w.flush()?;
            Some(curve)
        }
        None => None,
    };

    let summary = json!({
        "config": config,
        "config_sources": provenance,
        "budget": table.budget,
        "k_values": args.k_values,
        "p_values": p_values,
        "best_k": best_k,
        "skipped": table.skipped,
        "target": args.target,
        "failure_curve": failure,
    });
    fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("allocation table: {}", csv_path.display());
    Ok(0)
}

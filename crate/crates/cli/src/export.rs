//! `export`: event logs to a weighted dataset through the replay buffer.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::json;
use tracing::warn;
use walkdir::WalkDir;

use evalscale::export::{
    assign_credit_irft, export_dataset, load_buffer, records_from_events, replay_buffer_merge, truncate_after_peak,
    ExportConfig, RStage,
};
use evalscale::scheduler::{read_events, LogReadStats};

use crate::overrides::{layered, no_alias};
use crate::EXIT_ABORTED;

/// Largest tolerated share of unparseable log lines.
pub const MAX_CORRUPT_FRACTION: f64 = 0.01;

#[derive(Args)]
pub struct ExportArgs {
    /// Directory searched recursively for `*.jsonl` event logs.
    #[arg(long)]
    pub runs: PathBuf,
    /// Export configuration file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Training iteration these logs belong to; picks the selection ratio.
    #[arg(long, default_value_t = 1)]
    pub iteration: u32,
    /// Use this selection ratio instead of the schedule.
    #[arg(long)]
    pub r_percent: Option<f64>,
    /// Replay buffer directory [default: <out>/buffer].
    #[arg(long)]
    pub buffer: Option<PathBuf>,
    #[arg(long)]
    pub include_zero_weight: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn find_logs(runs: &Path, skip: &[&Path]) -> Result<Vec<PathBuf>> {
    if !runs.is_dir() {
        bail!("runs directory {} does not exist", runs.display());
    }
    let skip: Vec<PathBuf> = skip.iter().filter_map(|p| p.canonicalize().ok()).collect();
    let mut logs = Vec::new();
    let walk = WalkDir::new(runs).sort_by_file_name().into_iter().filter_entry(|e| {
        let Ok(p) = e.path().canonicalize() else { return true };
        !skip.iter().any(|s| p.starts_with(s))
    });
    for entry in walk {
        let entry = entry?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "jsonl") {
            logs.push(entry.into_path());
        }
    }
    Ok(logs)
}

pub fn cmd_export(args: ExportArgs) -> Result<u8> {
    let (mut config, provenance): (ExportConfig, _) = layered(args.config.as_deref(), &args.overrides, no_alias)?;
    if let Some(r) = args.r_percent {
        config.r_schedule = vec![RStage {
            from_iteration: 0,
            to_iteration: u32::MAX,
            r_percent: r,
        }];
    }
    if args.include_zero_weight {
        config.include_zero_weight = true;
    }
    config.validate().map_err(anyhow::Error::msg).context("invalid export configuration")?;
    let buffer = args.buffer.clone().unwrap_or_else(|| args.out.join("buffer"));

    let logs = find_logs(&args.runs, &[&buffer, &args.out])?;
    if logs.is_empty() {
        bail!("no event logs (*.jsonl) under {}", args.runs.display());
    }
    let mut events = Vec::new();
    let mut stats = LogReadStats::default();
    for log in &logs {
        let file = fs::File::open(log).with_context(|| format!("opening {}", log.display()))?;
        let (mut ev, s) = read_events(BufReader::new(file));
        if s.corrupt > 0 {
            warn!(log = %log.display(), corrupt = s.corrupt, "skipped unparseable lines");
        }
        stats.lines += s.lines;
        stats.corrupt += s.corrupt;
        events.append(&mut ev);
    }
    if stats.corrupt > 0 {
        eprintln!("warning: skipped {} corrupt of {} log lines", stats.corrupt, stats.lines);
    }
    if stats.corrupt_fraction() > MAX_CORRUPT_FRACTION {
        eprintln!(
            "error: {:.2}% of log lines are corrupt (limit {}%)",
            100.0 * stats.corrupt_fraction(),
            100.0 * MAX_CORRUPT_FRACTION
        );
        return Ok(EXIT_ABORTED);
    }

    let records = records_from_events(&events, args.iteration);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let merged = replay_buffer_merge(&buffer, &records, args.iteration)
        .with_context(|| format!("merging into {}", buffer.display()))?;
    let mut all = load_buffer(&buffer).with_context(|| format!("loading {}", buffer.display()))?;
    if config.truncate_after_peak {
        all = all.iter().map(truncate_after_peak).collect();
    }
    let r = config.r_for(args.iteration);
    let credits = assign_credit_irft(&all, r, config.per_task_grouping);
    let mut bytes = Vec::new();
    let summary = export_dataset(&all, &credits, config.include_zero_weight, &mut bytes)?;
    let dataset = args.out.join("dataset.jsonl");
    fs::write(&dataset, &bytes).with_context(|| format!("writing {}", dataset.display()))?;

    let report = json!({
        "logs": logs,
        "log_lines": stats.lines,
        "corrupt_lines": stats.corrupt,
        "iteration": args.iteration,
        "r_percent": r,
        "buffer": merged,
        "export": summary,
        "config": config,
        "config_sources": provenance,
    });
    fs::write(args.out.join("export_summary.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "kept {} of {} trajectories at R={}%: {} rows",
        summary.kept_trajectories, summary.total_trajectories, r, summary.rows
    );
    if summary.skipped_rows > 0 {
        println!("skipped {} nodes without a prompt or response", summary.skipped_rows);
    }
    println!("buffer: {} new, {} already stored, {} total", merged.added, merged.duplicates, merged.total);
    println!("dataset: {}", dataset.display());
    Ok(0)
}

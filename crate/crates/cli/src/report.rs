//! `report`: summaries recomputed from an event log alone.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;

use evalscale::scheduler::{read_events, render_report, report_from_events};

use crate::run::saturated;

#[derive(Args)]
pub struct ReportArgs {
    /// A run directory holding `events.jsonl`, or the log file itself.
    #[arg(long)]
    pub run: PathBuf,
    /// Print the reports as JSON instead of text.
    #[arg(long)]
    pub json: bool,
    /// Write the best-score-over-evaluations series here as CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

pub fn cmd_report(args: ReportArgs) -> Result<u8> {
    let log = if args.run.is_dir() { args.run.join("events.jsonl") } else { args.run.clone() };
    let file = fs::File::open(&log).with_context(|| format!("opening {}", log.display()))?;
    let (events, stats) = read_events(BufReader::new(file));
    if stats.corrupt > 0 {
        eprintln!("warning: skipped {} corrupt of {} log lines", stats.corrupt, stats.lines);
    }
    let reports = report_from_events(&events);
    if args.json {
        let out = json!({ "saturated": saturated(&reports), "runs": reports });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        print!("{}", render_report(&reports));
        for r in &reports {
            let active = r.prunes.last().map(|p| p.kept.len()).unwrap_or(r.trajectory_best.len());
            println!("  active trajectories at end {active}");
        }
        if reports.len() > 1 {
            println!("saturated: {}", saturated(&reports));
        }
    }
    if let Some(path) = &args.curve {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["run_id", "evaluations", "best_score"])?;
        for r in &reports {
            for (n, s) in &r.best_curve {
                w.write_record([r.run_id.clone(), n.to_string(), s.to_string()])?;
            }
        }
        w.flush()?;
    }
    Ok(0)
}

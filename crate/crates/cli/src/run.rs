//! `run` and `sweep`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde_json::json;
use tracing::warn;

use evalscale::gateway::{Gateway, Generator, HttpGenerator, ScriptedGenerator, SyntheticGenerator};
use evalscale::model::{RunConfig, TaskSpec, TrajectoryStatus};
use evalscale::sandbox::{Evaluator, EvaluatorSpec, Isolation, MockEvaluator, SandboxEvaluator};
use evalscale::scheduler::{
    load_checkpoint, read_events, render_report, report_from_events, resume_with_restarts, run_with_restarts, sweep,
    Engine, EventLog, RunReport, RunStatus, SearchError, SearchOutcome, SweepError,
};

use crate::overrides::{layered, run_alias, Provenance};
use crate::{RuntimeFailure, SearchArgs, EXIT_ABORTED, EXIT_INTERRUPTED};

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    /// Continue from `<out>/checkpoint.json` instead of starting over.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    /// Grid point `CxLxK`. Repeatable.
    #[arg(long = "grid", value_name = "CxLxK", required = true)]
    pub grid: Vec<String>,
    /// Reject grid points whose `C * L * K` differs from this.
    #[arg(long)]
    pub fixed_budget: Option<u64>,
}

/// Where a bare command would be found, mirroring how the sandbox resolves it.
fn command_exists(spec: &EvaluatorSpec) -> bool {
    let cmd = Path::new(&spec.command);
    if spec.command.contains('/') {
        let full = match (&spec.workdir, cmd.is_absolute()) {
            (Some(dir), false) => dir.join(cmd),
            _ => cmd.to_path_buf(),
        };
        return full.is_file();
    }
    std::env::var_os("PATH")
        .map(|p| std::env::split_paths(&p).any(|d| d.join(cmd).is_file()))
        .unwrap_or(false)
}

fn load_config(args: &SearchArgs) -> Result<(RunConfig, Provenance)> {
    let (mut config, mut provenance): (RunConfig, _) = layered(args.config.as_deref(), &args.overrides, run_alias)?;
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
        provenance.flags.push(format!("rng_seed={seed}"));
    }
    if let Some(n) = args.restarts {
        config.restarts = n;
        provenance.flags.push(format!("restarts={n}"));
    }
    config.validate().context("invalid run configuration")?;
    Ok((config, provenance))
}

fn build_engine(args: &SearchArgs, task: &TaskSpec, config: &RunConfig) -> Result<Engine> {
    let generator: Arc<dyn Generator> = match args.mock_generator.as_deref() {
        Some("synthetic") => Arc::new(SyntheticGenerator::default()),
        Some(path) => Arc::new(
            ScriptedGenerator::from_path(Path::new(path)).with_context(|| format!("loading generator script {path}"))?,
        ),
        None => Arc::new(HttpGenerator::from_env().context("configuring the generator endpoint")?),
    };
    let evaluator: Arc<dyn Evaluator> = match args.mock_evaluator.as_deref() {
        Some("parse") => Arc::new(MockEvaluator::default()),
        Some(path) => Arc::new(
            MockEvaluator::from_path(Path::new(path)).with_context(|| format!("loading evaluator script {path}"))?,
        ),
        None => {
            if task.evaluator.isolation == Isolation::Process && !command_exists(&task.evaluator) {
                bail!("evaluator command {:?} not found", task.evaluator.command);
            }
            Arc::new(SandboxEvaluator::new(task.evaluator.clone(), task.score_direction))
        }
    };
    let gateway = Gateway::new(generator, config.token_budget, config.generation.clone());
    let mut engine = Engine::new(gateway, evaluator);
    engine.log_timings = args.log_timings;
    let flag = engine.shutdown.clone();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        warn!("cannot install the interrupt handler: {e}");
    }
    Ok(engine)
}

fn search_failed(e: SearchError) -> anyhow::Error {
    match e {
        SearchError::Setup(s) => anyhow!(s).context("setting up the run"),
        SearchError::Run(r) => anyhow!(r).context(RuntimeFailure),
    }
}

fn status_code(status: &RunStatus) -> u8 {
    match status {
        RunStatus::Completed => 0,
        RunStatus::Aborted(_) => EXIT_ABORTED,
        RunStatus::Interrupted => EXIT_INTERRUPTED,
    }
}

fn reports_of(log: &Path) -> Result<Vec<RunReport>> {
    let file = fs::File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let (events, _) = read_events(std::io::BufReader::new(file));
    Ok(report_from_events(&events))
}

/// A later run that did not beat the run before it.
pub fn saturated(reports: &[RunReport]) -> bool {
    reports.windows(2).any(|w| w[1].best_score <= w[0].best_score)
}

pub fn cmd_run(args: RunArgs) -> Result<u8> {
    let a = &args.search;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let log_path = a.out.join("events.jsonl");
    let cp_path = a.out.join("checkpoint.json");

    let (outcome, provenance): (SearchOutcome, Provenance) = if args.resume {
        let cp = load_checkpoint(&cp_path).with_context(|| format!("loading {}", cp_path.display()))?;
        let done = cp.state.trajectories.iter().all(|t| t.status != TrajectoryStatus::Active) && cp.inflight.is_empty();
        if done && cp.state.restart_index >= cp.state.config.restarts {
            bail!("the checkpointed search has already finished");
        }
        if a.config.is_some() || !a.overrides.is_empty() {
            warn!("resuming uses the checkpointed configuration; --config and --override are ignored");
        }
        let task = cp.state.task.clone();
        let config = cp.state.config.clone();
        let mut engine = build_engine(a, &task, &config)?;
        engine.checkpoint_path = Some(cp_path.clone());
        let mut log = EventLog::reopen(&log_path, cp.log_bytes, cp.next_ts)
            .with_context(|| format!("reopening {}", log_path.display()))?;
        let out = resume_with_restarts(cp, &engine, &mut log).map_err(search_failed)?;
        (out, Provenance { file: Some(cp_path.display().to_string()), ..Provenance::default() })
    } else {
        let task = TaskSpec::load(&a.task).with_context(|| format!("loading task {}", a.task.display()))?;
        let (config, provenance) = load_config(a)?;
        let mut engine = build_engine(a, &task, &config)?;
        engine.checkpoint_path = Some(cp_path.clone());
        let mut log = EventLog::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
        let out = run_with_restarts(task, config, &engine, &mut log).map_err(search_failed)?;
        (out, provenance)
    };

    let reports = reports_of(&log_path)?;
    let best = &outcome.best;
    let solution_path = a.out.join("best_solution.txt");
    fs::write(&solution_path, &best.solution).context("writing the best solution")?;
    let last = outcome.runs.last().expect("at least one run");
    let report = json!({
        "status": last.status,
        "saturated": saturated(&reports),
        "best": {
            "score": best.score,
            "node_id": best.node_id,
            "trajectory_id": best.trajectory_id,
            "solution_file": solution_path,
        },
        "config": last.state.config,
        "config_sources": provenance,
        "runs": reports,
    });
    let report_path = a.out.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n").context("writing report.json")?;

    print!("{}", render_report(&reports));
    if outcome.runs.len() > 1 {
        println!("saturated: {}", saturated(&reports));
    }
    println!("best score {} (node {})", best.score, best.node_id);
    println!("best solution: {}", solution_path.display());
    println!("report: {}", report_path.display());
    Ok(status_code(&last.status))
}

fn parse_point(text: &str) -> Result<(u32, u32, u32)> {
    let parts: Vec<&str> = text.split(['x', 'X', ',']).collect();
    let [c, l, k] = parts.as_slice() else {
        bail!("grid point {text:?} is not CxLxK");
    };
    let n = |s: &str| s.trim().parse::<u32>().with_context(|| format!("grid point {text:?}"));
    Ok((n(c)?, n(l)?, n(k)?))
}

pub fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let a = &args.search;
    let task = TaskSpec::load(&a.task).with_context(|| format!("loading task {}", a.task.display()))?;
    let (config, _) = load_config(a)?;
    let grid = args.grid.iter().map(|g| parse_point(g)).collect::<Result<Vec<_>>>()?;
    evalscale::scheduler::check_grid(&grid, args.fixed_budget)?;
    let engine = build_engine(a, &task, &config)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let log_path: PathBuf = a.out.join("events.jsonl");
    let mut log = EventLog::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let rows = sweep(&task, &config, &grid, args.fixed_budget, &engine, &mut log).map_err(|e| match e {
        SweepError::Search(s) => search_failed(s),
        other => anyhow!(other),
    })?;
    drop(log);
    let csv_path = a.out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    for r in &rows {
        println!("{}x{}x{}  best {}  {}", r.width, r.depth, r.samples, r.best_score, r.status);
    }
    println!("sweep table: {}", csv_path.display());
    let code = rows
        .iter()
        .map(|r| match r.status.as_str() {
            "completed" => 0,
            "aborted" => EXIT_ABORTED,
            _ => EXIT_INTERRUPTED,
        })
        .max()
        .unwrap_or(0);
    Ok(code)
}

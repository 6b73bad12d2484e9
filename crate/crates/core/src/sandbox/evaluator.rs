//! The evaluator contract.
//!
//! The solution is written to a fresh temporary directory and the configured
//! command runs there with `{SOLUTION_PATH}` substituted, stdin closed and a
//! scrubbed environment. The last non-empty stdout line must be
//! `SCORE <decimal>`; a line starting with `INVALID` rejects the solution.
//! A verifier follows the same contract and recomputes the score on inputs
//! the solution never sees.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::outcome::{ErrorClass, EvalOutcome, Verification};
use super::process::{run_isolated, ExitKind, ProcessLimits, ProcessReport};
use crate::model::ScoreDirection;

pub const SOLUTION_PLACEHOLDER: &str = "{SOLUTION_PATH}";
const EXCERPT_CHARS: usize = 2000;
const DEFAULT_PATH: &str = "/usr/local/bin:/usr/bin:/bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Isolation {
    #[default]
    Process,
    Container,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    #[default]
    Disabled,
    Allowed,
}

/// Accept a recomputed score when it is within either bound of the reported one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub absolute: f64,
    pub relative: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            absolute: 1e-9,
            relative: 1e-6,
        }
    }
}

impl Tolerance {
    pub fn accepts(&self, reported: f64, verified: f64) -> bool {
        let scale = reported.abs().max(verified.abs());
        let bound = self.absolute.max(self.relative * scale);
        (reported - verified).abs() <= bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierSpec {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    /// Defaults to the evaluator's limit.
    #[serde(default)]
    pub timeout_s: Option<f64>,
    #[serde(default)]
    pub memory_limit_mb: Option<u64>,
    #[serde(default)]
    pub tolerance: Tolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorSpec {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub timeout_s: f64,
    pub memory_limit_mb: u64,
    /// Directory relative commands resolve against (usually the task file's).
    #[serde(default)]
    pub workdir: Option<PathBuf>,
    #[serde(default)]
    pub isolation: Isolation,
    #[serde(default)]
    pub container_image: Option<String>,
    #[serde(default)]
    pub network: Network,
    #[serde(default)]
    pub verifier: Option<VerifierSpec>,
    #[serde(default = "default_solution_file")]
    pub solution_filename: String,
    /// Parent environment variables passed through to the evaluator.
    #[serde(default)]
    pub env_allowlist: Vec<String>,
}

fn default_solution_file() -> String {
    "solution.txt".to_string()
}

impl EvaluatorSpec {
    pub fn new(command: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            command: command.into(),
            args,
            timeout_s: 60.0,
            memory_limit_mb: 2048,
            workdir: None,
            isolation: Isolation::Process,
            container_image: None,
            network: Network::Disabled,
            verifier: None,
            solution_filename: default_solution_file(),
            env_allowlist: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.command.trim().is_empty() {
            return Err("evaluator.command is empty".into());
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(format!("evaluator.timeout_s must be positive, got {}", self.timeout_s));
        }
        if self.memory_limit_mb == 0 {
            return Err("evaluator.memory_limit_mb must be positive".into());
        }
        if self.isolation == Isolation::Container && self.container_image.is_none() {
            return Err("container isolation needs evaluator.container_image".into());
        }
        if let Some(v) = &self.verifier {
            if v.command.trim().is_empty() {
                return Err("verifier.command is empty".into());
            }
        }
        Ok(())
    }

    /// Short human-readable limits summary for prompts.
    pub fn summary(&self) -> String {
        format!(
            "time limit {}s per evaluation; memory limit {} MB; network {}",
            self.timeout_s,
            self.memory_limit_mb,
            match self.network {
                Network::Disabled => "disabled",
                Network::Allowed => "allowed",
            }
        )
    }

    fn resolve(&self, command: &str) -> String {
        match &self.workdir {
            Some(dir) if command.contains('/') && !Path::new(command).is_absolute() => {
                dir.join(command).to_string_lossy().into_owned()
            }
            _ => command.to_string(),
        }
    }
}

/// Anything that turns a solution into an outcome.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, solution: &str) -> EvalOutcome;

    /// One-line description of the limits, shown to the generator.
    fn describe(&self) -> String {
        String::new()
    }
}

/// The production evaluator: sandboxed run, optional verification, and
/// sign normalization for metrics where smaller is better.
#[derive(Debug, Clone)]
pub struct SandboxEvaluator {
    pub spec: EvaluatorSpec,
    pub direction: ScoreDirection,
}

impl SandboxEvaluator {
    pub fn new(spec: EvaluatorSpec, direction: ScoreDirection) -> Self {
        Self { spec, direction }
    }
}

impl Evaluator for SandboxEvaluator {
    fn evaluate(&self, solution: &str) -> EvalOutcome {
        let mut outcome = evaluate(solution, &self.spec);
        if self.spec.verifier.is_some() && !outcome.is_failure() {
            outcome = verify(outcome, solution, &self.spec);
        }
        match self.direction {
            ScoreDirection::Maximize => outcome,
            ScoreDirection::Minimize => outcome.negated(),
        }
    }

    fn describe(&self) -> String {
        self.spec.summary()
    }
}

struct Invocation<'a> {
    command: &'a str,
    args: &'a [String],
    timeout_s: f64,
    memory_limit_mb: u64,
}

/// Runs the primary evaluator once. Does not consult the verifier.
pub fn evaluate(solution: &str, spec: &EvaluatorSpec) -> EvalOutcome {
    let inv = Invocation {
        command: &spec.command,
        args: &spec.args,
        timeout_s: spec.timeout_s,
        memory_limit_mb: spec.memory_limit_mb,
    };
    let mut outcome = run_contract(solution, spec, &inv);
    if outcome.verification != Verification::Skipped {
        outcome.verification = Verification::Unverified;
    }
    outcome
}

/// Recomputes the score with the verifier and accepts it only when it matches.
pub fn verify(outcome: EvalOutcome, solution: &str, spec: &EvaluatorSpec) -> EvalOutcome {
    let Some(v) = &spec.verifier else {
        return outcome;
    };
    if outcome.is_failure() {
        return outcome;
    }
    let inv = Invocation {
        command: &v.command,
        args: &v.args,
        timeout_s: v.timeout_s.unwrap_or(spec.timeout_s),
        memory_limit_mb: v.memory_limit_mb.unwrap_or(spec.memory_limit_mb),
    };
    let check = run_contract(solution, spec, &inv);
    let mut out = outcome;
    out.wall_time_s += check.wall_time_s;
    let reported = out.reported_score.unwrap_or(f64::NAN);
    match (check.error_class, check.reported_score) {
        (ErrorClass::None, Some(verified)) if v.tolerance.accepts(reported, verified) => {
            out.verified_score = Some(verified);
            out.verification = Verification::Accepted;
        }
        (ErrorClass::None, Some(verified)) => {
            out.verified_score = Some(verified);
            out.verification = Verification::Rejected;
            out.error_class = ErrorClass::VerificationMismatch;
            out.stderr_excerpt = format!("reported {reported} but verifier computed {verified}");
        }
        (class, _) => {
            out.verification = Verification::Rejected;
            out.error_class = ErrorClass::VerificationMismatch;
            out.stderr_excerpt = format!("verifier failed ({class}): {}", check.stderr_excerpt);
        }
    }
    out
}

fn run_contract(solution: &str, spec: &EvaluatorSpec, inv: &Invocation<'_>) -> EvalOutcome {
    let dir = match tempfile::Builder::new().prefix("evalscale-").tempdir() {
        Ok(d) => d,
        Err(e) => return EvalOutcome::failed(ErrorClass::Crash, format!("tempdir: {e}")),
    };
    let solution_path = dir.path().join(&spec.solution_filename);
    if let Err(e) = std::fs::write(&solution_path, solution) {
        return EvalOutcome::failed(ErrorClass::Crash, format!("writing solution: {e}"));
    }

    let argv = match spec.isolation {
        Isolation::Process => {
            let path = solution_path.to_string_lossy();
            let mut argv = vec![spec.resolve(inv.command)];
            argv.extend(inv.args.iter().map(|a| a.replace(SOLUTION_PLACEHOLDER, &path)));
            argv
        }
        Isolation::Container => container_argv(spec, inv, dir.path()),
    };
    let mut env = vec![
        ("PATH".to_string(), DEFAULT_PATH.to_string()),
        ("HOME".to_string(), dir.path().to_string_lossy().into_owned()),
        ("TMPDIR".to_string(), dir.path().to_string_lossy().into_owned()),
        ("LANG".to_string(), "C.UTF-8".to_string()),
    ];
    for key in &spec.env_allowlist {
        if let Ok(val) = std::env::var(key) {
            env.retain(|(k, _)| k != key);
            env.push((key.clone(), val));
        }
    }
    let limits = ProcessLimits {
        timeout: Duration::from_secs_f64(inv.timeout_s),
        // Containers get their cap from the runtime instead.
        memory_limit_mb: (spec.isolation == Isolation::Process).then_some(inv.memory_limit_mb),
    };

    match run_isolated(&argv, dir.path(), &env, &limits) {
        Ok(report) => classify(&report),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => EvalOutcome::failed(
            ErrorClass::MissingDependency,
            format!("evaluator not found: {}", argv[0]),
        ),
        Err(e) => EvalOutcome::failed(ErrorClass::Crash, format!("spawn {}: {e}", argv[0])),
    }
    // `dir` drops here and removes the working directory.
}

/// `docker run` command line for container isolation.
fn container_argv(spec: &EvaluatorSpec, inv: &Invocation<'_>, workdir: &Path) -> Vec<String> {
    let mount = format!("{}:/work", workdir.display());
    let inner_path = format!("/work/{}", spec.solution_filename);
    let mut argv: Vec<String> = ["docker", "run", "--rm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if spec.network == Network::Disabled {
        argv.extend(["--network".into(), "none".into()]);
    }
    argv.extend([
        "--memory".into(),
        format!("{}m", inv.memory_limit_mb),
        "-v".into(),
        mount,
        "-w".into(),
        "/work".into(),
        spec.container_image.clone().unwrap_or_default(),
        inv.command.to_string(),
    ]);
    argv.extend(inv.args.iter().map(|a| a.replace(SOLUTION_PLACEHOLDER, &inner_path)));
    argv
}

fn excerpt(stderr: &str) -> String {
    let trimmed = stderr.trim();
    if trimmed.chars().count() <= EXCERPT_CHARS {
        return trimmed.to_string();
    }
    // Keep the tail: the error usually comes last.
    let skip = trimmed.chars().count() - EXCERPT_CHARS;
    trimmed.chars().skip(skip).collect()
}

fn memory_evidence(stderr: &str) -> bool {
    let s = stderr.to_ascii_lowercase();
    ["memoryerror", "out of memory", "cannot allocate", "bad_alloc", "mmap", "killed"]
        .iter()
        .any(|p| s.contains(p))
}

fn missing_dependency(stderr: &str) -> bool {
    ["ModuleNotFoundError", "No module named", "command not found", "cannot open shared object", "ImportError"]
        .iter()
        .any(|p| stderr.contains(p))
}

/// Maps a finished process to an outcome.
pub fn classify(report: &ProcessReport) -> EvalOutcome {
    let wall = report.wall.as_secs_f64();
    let stderr = excerpt(&report.stderr);
    let mut out = match report.exit {
        ExitKind::TimedOut => EvalOutcome::failed(
            ErrorClass::Timeout,
            format!("timed out after {wall:.3}s; {stderr}").trim_end_matches("; ").to_string(),
        ),
        ExitKind::Signaled(sig) => {
            let mut msg = format!("terminated by signal {sig}");
            if sig == libc::SIGKILL || sig == libc::SIGSEGV || memory_evidence(&stderr) {
                msg.push_str(" (possible memory limit)");
            }
            if !stderr.is_empty() {
                msg.push_str("; ");
                msg.push_str(&stderr);
            }
            EvalOutcome::failed(ErrorClass::Crash, msg)
        }
        ExitKind::Exited(code) if code != 0 => {
            let class = if code == 127 || missing_dependency(&stderr) {
                ErrorClass::MissingDependency
            } else {
                ErrorClass::Crash
            };
            let mut msg = format!("exit status {code}");
            if memory_evidence(&stderr) {
                msg.push_str(" (memory limit exceeded)");
            }
            if !stderr.is_empty() {
                msg.push_str("; ");
                msg.push_str(&stderr);
            }
            EvalOutcome::failed(class, msg)
        }
        ExitKind::Exited(_) => match parse_score_line(&report.stdout) {
            Ok(score) => {
                let mut o = EvalOutcome::scored(score);
                o.stderr_excerpt = stderr;
                o
            }
            Err(class_msg) => EvalOutcome::failed(class_msg.0, class_msg.1),
        },
    };
    out.wall_time_s = wall;
    out
}

/// Parses the last non-empty stdout line.
pub fn parse_score_line(stdout: &str) -> Result<f64, (ErrorClass, String)> {
    let Some(last) = stdout.lines().map(str::trim).rfind(|l| !l.is_empty()) else {
        return Err((ErrorClass::MalformedOutput, "evaluator printed nothing".into()));
    };
    if last.starts_with("INVALID") {
        return Err((ErrorClass::InvalidSolution, last.to_string()));
    }
    let Some(rest) = last.strip_prefix("SCORE") else {
        return Err((ErrorClass::MalformedOutput, format!("expected SCORE line, got {last:?}")));
    };
    if !rest.starts_with(char::is_whitespace) {
        return Err((ErrorClass::MalformedOutput, format!("expected SCORE line, got {last:?}")));
    }
    match rest.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err((ErrorClass::InvalidSolution, format!("non-finite score {v}"))),
        Err(_) => Err((ErrorClass::MalformedOutput, format!("unparseable score in {last:?}"))),
    }
}

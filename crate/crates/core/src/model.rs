//! Tasks, nodes, trajectories and the budget arithmetic of a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GenerationSettings, TokenBudget};
use crate::sandbox::{ErrorClass, EvalOutcome, Evaluator, EvaluatorSpec, LocalMemory, Verification};
use crate::scheduler::{DispatchPolicy, PruneSchedule};
use crate::selection::{ElitePool, SelectorConfig, SelectorKind};

/// Score carried by failed candidates: the lowest finite `f64`, so a plain
/// argmax never needs to special-case failures.
pub const FAILURE_SCORE: f64 = f64::MIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreDirection {
    #[default]
    Maximize,
    /// Scores are negated on ingestion so the engine always maximizes.
    Minimize,
}

/// Node identifier. Ids follow canonical creation order: the shared initial
/// node is 0 and sample `k` of the batch at depth `d` of trajectory `c` is
/// `1 + (d * C + c) * K + k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl NodeId {
    pub const INITIAL: NodeId = NodeId(0);

    pub fn for_sample(width: u32, samples: u32, trajectory: u32, depth: u32, sample: u32) -> NodeId {
        let slot = (depth as u64 * width as u64 + trajectory as u64) * samples as u64 + sample as u64;
        NodeId(1 + slot)
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing task file {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid task: {0}")]
    Invalid(String),
}

/// The problem being searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub instruction: String,
    pub evaluator: EvaluatorSpec,
    pub initial_solution: String,
    #[serde(default)]
    pub score_direction: ScoreDirection,
    /// Candidates must wrap the solution in block markers.
    #[serde(default)]
    pub solution_markers: bool,
    /// Optional warm-start text shown to the generator.
    #[serde(default)]
    pub artifacts: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    task_id: String,
    #[serde(default)]
    instruction: Option<String>,
    #[serde(default)]
    instruction_path: Option<PathBuf>,
    #[serde(default)]
    initial_solution: Option<String>,
    #[serde(default)]
    initial_solution_path: Option<PathBuf>,
    evaluator: EvaluatorSpec,
    #[serde(default)]
    score_direction: ScoreDirection,
    #[serde(default)]
    solution_markers: bool,
    #[serde(default)]
    artifacts: Option<String>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.task_id.trim().is_empty() {
            return Err(TaskError::Invalid("task_id is empty".into()));
        }
        if self.instruction.trim().is_empty() {
            return Err(TaskError::Invalid("instruction is empty".into()));
        }
        self.evaluator.validate().map_err(TaskError::Invalid)
    }

    /// Loads a task file. Relative paths inside it resolve against the
    /// file's directory, which also becomes the evaluator's default workdir.
    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: TaskFile = serde_json::from_str(&text).map_err(|source| TaskError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let read = |p: &Path| {
            let full = base.join(p);
            std::fs::read_to_string(&full).map_err(|source| TaskError::Io { path: full, source })
        };
        let instruction = match (file.instruction, file.instruction_path) {
            (Some(text), None) => text,
            (None, Some(p)) => read(&p)?,
            _ => return Err(TaskError::Invalid("give exactly one of instruction, instruction_path".into())),
        };
        let initial_solution = match (file.initial_solution, file.initial_solution_path) {
            (Some(text), None) => text,
            (None, Some(p)) => read(&p)?,
            _ => {
                return Err(TaskError::Invalid(
                    "give exactly one of initial_solution, initial_solution_path".into(),
                ))
            }
        };
        let mut evaluator = file.evaluator;
        evaluator.workdir = Some(match evaluator.workdir.take() {
            Some(dir) => base.join(dir),
            None => base.clone(),
        });
        let task = TaskSpec {
            task_id: file.task_id,
            instruction,
            evaluator,
            initial_solution,
            score_direction: file.score_direction,
            solution_markers: file.solution_markers,
            artifacts: file.artifacts,
        };
        task.validate()?;
        Ok(task)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMetadata {
    pub error_class: ErrorClass,
    /// Evaluator messages (stderr excerpt or failure description).
    #[serde(default)]
    pub feedback: String,
    /// 1-based refinement step that produced the node; 0 for the initial node.
    pub proposal_index: u32,
    /// Position within the local batch.
    pub return_order: u32,
    #[serde(default)]
    pub reported_score: Option<f64>,
    #[serde(default)]
    pub verified_score: Option<f64>,
    #[serde(default)]
    pub verification: Verification,
    #[serde(default)]
    pub wall_time_s: f64,
    /// The candidate never reached the evaluator (generation shortfall or
    /// extraction failure).
    #[serde(default)]
    pub synthetic: bool,
}

/// One evaluated attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: NodeId,
    /// `None` for the initial node shared by all trajectories.
    pub trajectory_id: Option<u32>,
    pub solution: String,
    pub score: f64,
    pub metadata: NodeMetadata,
    pub inspiration_parents: Vec<NodeId>,
    pub selection_count: u64,
    #[serde(default)]
    pub reflection: Option<String>,
}

impl Node {
    pub fn initial(solution: String, outcome: &EvalOutcome) -> Self {
        Self::from_outcome(NodeId::INITIAL, None, solution, outcome, Vec::new(), 0, 0)
    }

    pub fn from_outcome(
        node_id: NodeId,
        trajectory_id: Option<u32>,
        solution: String,
        outcome: &EvalOutcome,
        inspiration_parents: Vec<NodeId>,
        proposal_index: u32,
        return_order: u32,
    ) -> Self {
        Self {
            node_id,
            trajectory_id,
            solution,
            score: outcome.score(),
            metadata: NodeMetadata {
                error_class: outcome.error_class,
                feedback: outcome.stderr_excerpt.clone(),
                proposal_index,
                return_order,
                reported_score: outcome.reported_score,
                verified_score: outcome.verified_score,
                verification: outcome.verification,
                wall_time_s: outcome.wall_time_s,
                synthetic: false,
            },
            inspiration_parents,
            selection_count: 0,
            reflection: None,
        }
    }

    pub fn is_failure(&self) -> bool {
        self.metadata.error_class.is_failure()
    }
}

/// `true` when `a` ranks above `b`: higher score, then earlier creation.
pub fn ranks_above(a: &Node, b: &Node) -> bool {
    a.score > b.score || (a.score == b.score && a.node_id < b.node_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Active,
    Pruned,
    Finished,
}

/// One refinement chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory_id: u32,
    pub seed: u64,
    /// The initial node followed by one committed node per completed step.
    pub history: Vec<Node>,
    pub depth: u32,
    pub memory: LocalMemory,
    #[serde(default)]
    pub elite: ElitePool,
    pub status: TrajectoryStatus,
    /// Candidates logged so far, committed or not.
    pub logged_candidates: u64,
    /// Best candidate seen, including uncommitted batch members.
    pub best: Node,
}

impl Trajectory {
    pub fn new(trajectory_id: u32, seed: u64, initial: &Node) -> Self {
        Self {
            trajectory_id,
            seed,
            history: vec![initial.clone()],
            depth: 0,
            memory: LocalMemory::default(),
            elite: ElitePool::default(),
            status: TrajectoryStatus::Active,
            logged_candidates: 0,
            best: initial.clone(),
        }
    }

    /// Committed node ids in commit order.
    pub fn committed(&self) -> Vec<NodeId> {
        self.history[1..].iter().map(|n| n.node_id).collect()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.history.iter().find(|n| n.node_id == id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.history.iter_mut().find(|n| n.node_id == id)
    }

    /// Best committed score, used to rank trajectories for pruning.
    pub fn best_committed_score(&self) -> f64 {
        self.history.iter().map(|n| n.score).fold(FAILURE_SCORE, f64::max)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CommitError {
    #[error("batch has {got} candidates, expected {expected}")]
    BatchSize { got: usize, expected: usize },
    #[error("trajectory {0} is not active")]
    Inactive(u32),
    #[error("trajectory {0} already reached its depth limit")]
    DepthExhausted(u32),
}

/// Index of the best entry; ties go to the lowest index.
pub fn local_best_index(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if s <= scores[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Commits the best of a local batch to `trajectory`.
///
/// All `samples` candidates count as logged; only the argmax joins the
/// history. A batch where every candidate failed commits its first entry,
/// which carries the failure's error class.
pub fn commit_local_best(
    trajectory: &mut Trajectory,
    batch: Vec<Node>,
    samples: u32,
    max_depth: u32,
) -> Result<Node, CommitError> {
    if batch.len() != samples as usize {
        return Err(CommitError::BatchSize {
            got: batch.len(),
            expected: samples as usize,
        });
    }
    if trajectory.status != TrajectoryStatus::Active {
        return Err(CommitError::Inactive(trajectory.trajectory_id));
    }
    if trajectory.depth >= max_depth {
        return Err(CommitError::DepthExhausted(trajectory.trajectory_id));
    }
    let scores: Vec<f64> = batch.iter().map(|n| n.score).collect();
    let winner = local_best_index(&scores).expect("samples is positive");
    for node in &batch {
        if ranks_above(node, &trajectory.best) {
            trajectory.best = node.clone();
        }
    }
    let committed = batch.into_iter().nth(winner).unwrap();
    trajectory.logged_candidates += samples as u64;
    trajectory.history.push(committed.clone());
    trajectory.depth += 1;
    if trajectory.depth == max_depth {
        trajectory.status = TrajectoryStatus::Finished;
    }
    Ok(committed)
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field}: {message}")]
    Field { field: &'static str, message: String },
    #[error(transparent)]
    Parse(#[from] serde_json::Error),
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub failure_patterns: bool,
    pub pattern_count: usize,
    pub reflection: bool,
    /// Reflection length cap in characters.
    pub reflection_cap: usize,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            failure_patterns: true,
            pattern_count: crate::sandbox::DEFAULT_PATTERN_COUNT,
            reflection: true,
            reflection_cap: crate::sandbox::DEFAULT_REFLECTION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkerConfig {
    pub generation: usize,
    pub evaluation: usize,
    /// Bound of each work queue; producers block when it is full.
    pub queue_capacity: usize,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Self {
            generation: 4,
            evaluation: cpus,
            queue_capacity: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
    /// Abort the run once this many requests in a row exhausted their retries.
    pub abort_after_consecutive: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay_ms: 500,
            abort_after_consecutive: 8,
        }
    }
}

/// A point of the design space plus everything the engine needs to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Number of independent trajectories.
    #[serde(alias = "C")]
    pub width: u32,
    /// Refinement steps per trajectory.
    #[serde(alias = "L")]
    pub depth: u32,
    /// Candidates generated per step.
    #[serde(alias = "K")]
    pub samples: u32,
    pub selector: SelectorKind,
    pub selector_config: SelectorConfig,
    pub token_budget: TokenBudget,
    pub generation: GenerationSettings,
    pub pruning: Option<PruneSchedule>,
    pub restarts: u32,
    pub rng_seed: u64,
    pub dispatch: DispatchPolicy,
    pub signals: SignalConfig,
    pub workers: WorkerConfig,
    pub retry: RetryPolicy,
    /// Write a checkpoint every this many commits (0 disables).
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            width: 32,
            depth: 100,
            samples: 16,
            selector: SelectorKind::Rpucg,
            selector_config: SelectorConfig::default(),
            token_budget: TokenBudget::default(),
            generation: GenerationSettings::default(),
            pruning: None,
            restarts: 0,
            rng_seed: 0,
            dispatch: DispatchPolicy::default(),
            signals: SignalConfig::default(),
            workers: WorkerConfig::default(),
            retry: RetryPolicy::default(),
            checkpoint_every: 0,
        }
    }
}

impl RunConfig {
    /// Evaluator budget `C * L * K` of one run.
    pub fn planned_evaluations(&self) -> u64 {
        self.width as u64 * self.depth as u64 * self.samples as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.width == 0 {
            return Err(field("width", "must be positive"));
        }
        if self.depth == 0 {
            return Err(field("depth", "must be positive"));
        }
        if self.samples == 0 {
            return Err(field("samples", "must be positive"));
        }
        if (self.width as u64 + 1) * self.depth as u64 * self.samples as u64 >= 1 << 53 {
            return Err(field("width", "design space too large"));
        }
        self.selector_config
            .validate()
            .map_err(|m| field("selector_config", m))?;
        if let Some(p) = &self.pruning {
            p.validate(self.depth).map_err(|m| field("pruning", m))?;
        }
        if self.dispatch.max_unresolved_batches_per_trajectory == 0 {
            return Err(field("dispatch", "max_unresolved_batches_per_trajectory must be positive"));
        }
        if !(self.generation.temperature.is_finite() && self.generation.temperature >= 0.0) {
            return Err(field("generation", "temperature must be finite and non-negative"));
        }
        if self.workers.generation == 0 || self.workers.evaluation == 0 || self.workers.queue_capacity == 0 {
            return Err(field("workers", "pool sizes and queue capacity must be positive"));
        }
        if self.retry.attempts == 0 {
            return Err(field("retry", "attempts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub planned_evaluations: u64,
    pub consumed_evaluations: u64,
    pub consumed_generations: u64,
    /// Candidates that failed before evaluation; they fill batch slots but
    /// are not evaluator calls.
    #[serde(default)]
    pub synthetic_failures: u64,
    /// Budget removed from the plan by pruning.
    #[serde(default)]
    pub pruned_evaluations: u64,
}

impl BudgetLedger {
    /// Candidates accounted for, evaluated or synthetic.
    pub fn accounted(&self) -> u64 {
        self.consumed_evaluations + self.synthetic_failures
    }
}

/// Mixes `parent` and `index` into a new 64-bit seed (splitmix64 finalizer).
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifier of run `restart` of a search seeded with `seed`.
pub fn run_id_for(task_id: &str, seed: u64, restart: u32) -> String {
    format!("{task_id}-{seed:016x}-r{restart}")
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid task: {0}")]
    Task(#[from] TaskError),
    #[error("the initial solution could not be scored ({class}): {message}")]
    InitialEvaluation { class: ErrorClass, message: String },
}

/// Everything the coordinator owns during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub task: TaskSpec,
    pub config: RunConfig,
    pub initial: Node,
    pub trajectories: Vec<Trajectory>,
    pub ledger: BudgetLedger,
    /// Which restart this run is (0 for the first run).
    pub restart_index: u32,
    /// Pruning cutoffs already applied.
    pub cutoffs_applied: usize,
}

/// Evaluates the initial solution and creates `C` trajectories around it.
/// The setup evaluation is not charged to the budget.
pub fn init_run(
    task: TaskSpec,
    config: RunConfig,
    evaluator: &dyn Evaluator,
    restart_index: u32,
) -> Result<RunState, SetupError> {
    config.validate()?;
    if task.instruction.trim().is_empty() {
        return Err(TaskError::Invalid("instruction is empty".into()).into());
    }
    let outcome = evaluator.evaluate(&task.initial_solution);
    if outcome.is_failure() {
        return Err(SetupError::InitialEvaluation {
            class: outcome.error_class,
            message: outcome.stderr_excerpt,
        });
    }
    let initial = Node::initial(task.initial_solution.clone(), &outcome);
    let run_seed = derive_seed(config.rng_seed, restart_index as u64);
    let trajectories = (0..config.width)
        .map(|c| Trajectory::new(c, derive_seed(run_seed, c as u64), &initial))
        .collect();
    Ok(RunState {
        run_id: run_id_for(&task.task_id, config.rng_seed, restart_index),
        ledger: BudgetLedger {
            planned_evaluations: config.planned_evaluations(),
            ..BudgetLedger::default()
        },
        task,
        config,
        initial,
        trajectories,
        restart_index,
        cutoffs_applied: 0,
    })
}

/// Highest-scoring node of the run, including uncommitted batch members.
/// Ties go to the earliest-created node.
pub fn best_overall(state: &RunState) -> Node {
    let mut best = &state.initial;
    for t in &state.trajectories {
        if ranks_above(&t.best, best) {
            best = &t.best;
        }
    }
    best.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::{FnEvaluator, MockEvaluator};

    fn task() -> TaskSpec {
        TaskSpec {
            task_id: "toy".into(),
            instruction: "maximize".into(),
            evaluator: EvaluatorSpec::new("/bin/true", vec![]),
            initial_solution: "0.1".into(),
            score_direction: ScoreDirection::Maximize,
            solution_markers: false,
            artifacts: None,
        }
    }

    fn cfg(c: u32, l: u32, k: u32) -> RunConfig {
        RunConfig {
            width: c,
            depth: l,
            samples: k,
            ..RunConfig::default()
        }
    }

    fn batch(scores: &[f64], depth: u32) -> Vec<Node> {
        scores
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let o = if s == FAILURE_SCORE {
                    EvalOutcome::failed(ErrorClass::Crash, "x")
                } else {
                    EvalOutcome::scored(s)
                };
                Node::from_outcome(
                    NodeId::for_sample(1, scores.len() as u32, 0, depth, k as u32),
                    Some(0),
                    format!("{s}"),
                    &o,
                    vec![],
                    depth + 1,
                    k as u32,
                )
            })
            .collect()
    }

    #[test]
    fn planned_budget() {
        let ev = MockEvaluator::default();
        assert_eq!(init_run(task(), cfg(32, 100, 16), &ev, 0).unwrap().ledger.planned_evaluations, 51_200);
        let s = init_run(task(), cfg(1, 1, 1), &ev, 0).unwrap();
        assert_eq!(s.ledger.planned_evaluations, 1);
        assert_eq!(s.trajectories.len(), 1);
        assert_eq!(init_run(task(), cfg(2, 3, 4), &ev, 0).unwrap().ledger.planned_evaluations, 24);
        assert_eq!(ev.calls(), 3);
    }

    #[test]
    fn unscoreable_initial_solution_is_a_setup_error() {
        let ev = FnEvaluator(|_: &str| EvalOutcome::failed(ErrorClass::Crash, "nope"));
        assert!(matches!(
            init_run(task(), cfg(1, 1, 1), &ev, 0),
            Err(SetupError::InitialEvaluation { class: ErrorClass::Crash, .. })
        ));
    }

    #[test]
    fn commit_takes_argmax_with_low_index_ties() {
        let init = Node::initial("0".into(), &EvalOutcome::scored(0.0));
        let mut t = Trajectory::new(0, 1, &init);
        let c = commit_local_best(&mut t, batch(&[0.1, 0.9, 0.5], 0), 3, 5).unwrap();
        assert_eq!(c.score, 0.9);
        let mut t = Trajectory::new(0, 1, &init);
        let c = commit_local_best(&mut t, batch(&[0.4, 0.4], 0), 2, 5).unwrap();
        assert_eq!(c.metadata.return_order, 0);
        assert_eq!(t.depth, 1);
        assert_eq!(t.logged_candidates, 2);
    }

    #[test]
    fn all_failed_batch_commits_first_failure() {
        let init = Node::initial("0".into(), &EvalOutcome::scored(0.0));
        let mut t = Trajectory::new(0, 1, &init);
        let c = commit_local_best(&mut t, batch(&[FAILURE_SCORE; 3], 0), 3, 5).unwrap();
        assert_eq!(c.metadata.return_order, 0);
        assert_eq!(c.metadata.error_class, ErrorClass::Crash);
        assert_eq!(t.best.node_id, NodeId::INITIAL);
    }

    #[test]
    fn commit_preconditions() {
        let init = Node::initial("0".into(), &EvalOutcome::scored(0.0));
        let mut t = Trajectory::new(0, 1, &init);
        assert_eq!(
            commit_local_best(&mut t, batch(&[0.1], 0), 2, 5),
            Err(CommitError::BatchSize { got: 1, expected: 2 })
        );
        commit_local_best(&mut t, batch(&[0.1], 0), 1, 1).unwrap();
        assert_eq!(t.status, TrajectoryStatus::Finished);
        assert_eq!(commit_local_best(&mut t, batch(&[0.1], 1), 1, 1), Err(CommitError::Inactive(0)));
    }

    #[test]
    fn best_overall_sees_uncommitted_members() {
        let ev = MockEvaluator::default();
        let mut s = init_run(task(), cfg(2, 2, 2), &ev, 0).unwrap();
        assert_eq!(best_overall(&s).node_id, NodeId::INITIAL);
        commit_local_best(&mut s.trajectories[0], batch(&[0.3, 0.2], 0), 2, 2).unwrap();
        let mut b = batch(&[0.5, 0.8], 0);
        for n in &mut b {
            n.node_id.0 += 10;
        }
        commit_local_best(&mut s.trajectories[1], b, 2, 2).unwrap();
        let best = best_overall(&s);
        assert_eq!(best.score, 0.8);
        assert_eq!(s.trajectories[1].committed().len(), 1);
        assert_eq!(s.trajectories[1].history[1].score, 0.8);
    }

    #[test]
    fn ids_follow_creation_order() {
        let (c, k) = (3, 4);
        let mut last = NodeId::INITIAL;
        for d in 0..5 {
            for t in 0..c {
                for s in 0..k {
                    let id = NodeId::for_sample(c, k, t, d, s);
                    assert_eq!(id.0, last.0 + 1);
                    last = id;
                }
            }
        }
    }

    #[test]
    fn config_aliases_and_validation() {
        let c: RunConfig = serde_json::from_str(r#"{"C":4,"L":5,"K":2}"#).unwrap();
        assert_eq!(c.planned_evaluations(), 40);
        assert!(cfg(0, 1, 1).validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn seeds_differ_per_index() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}

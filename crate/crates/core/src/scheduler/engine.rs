//! The coordinator loop.
//!
//! State changes happen here only, and only when a batch resolves: all `K`
//! slots are filled, the post-commit job (reflection, elite decision) has
//! returned, and every earlier batch of the same trajectory has resolved.
//! Each resolved batch becomes a block of events; blocks are written in
//! canonical order, so the log does not depend on completion order.

use std::collections::{BTreeMap, VecDeque};
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tracing::{debug, info, warn};

use crate::gateway::{
    extract_solution, Gateway, GatewayError, Generator, GeneratorRequest, GeneratorResponse, RequestOrigin,
    RequestPurpose,
};
use crate::model::{
    best_overall, commit_local_best, derive_seed, local_best_index, Node, NodeId, RunState, TrajectoryStatus,
};
use crate::sandbox::{
    accumulate_failure_patterns, kill_all_groups, reflection_prompt, truncate_chars, ErrorClass, EvalOutcome,
    Evaluator, LocalMemory,
};
use crate::selection::{
    apply_decision, build_proposal, elite_prompt, overrides, parse_elite_decision, render, select_inspirations,
    EliteDecision, ElitePool, SelectorKind,
};

use super::checkpoint::{
    save_checkpoint, BlockKey, Checkpoint, InflightBatch, PendingBlock, Snapshot, TrajectoryRuntime,
};
use super::events::{Draft, EventKind, EventLog};
use super::prune::apply_prune;
use super::DispatchMode;

/// Services a run needs besides its state.
#[derive(Clone)]
pub struct Engine {
    pub gateway: Gateway,
    pub evaluator: Arc<dyn Evaluator>,
    pub checkpoint_path: Option<PathBuf>,
    /// Set from a signal handler to stop dispatching and checkpoint.
    pub shutdown: Arc<AtomicBool>,
    /// Include latencies and wall times in the log (breaks byte equality
    /// between runs).
    pub log_timings: bool,
}

impl Engine {
    pub fn new(gateway: Gateway, evaluator: Arc<dyn Evaluator>) -> Self {
        Self {
            gateway,
            evaluator,
            checkpoint_path: None,
            shutdown: Arc::new(AtomicBool::new(false)),
            log_timings: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("writing the event log: {0}")]
    Log(#[source] io::Error),
    #[error("writing a checkpoint: {0}")]
    Checkpoint(#[source] io::Error),
    #[error("checkpoint does not match its run: {0}")]
    BadCheckpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum RunStatus {
    Completed,
    Aborted(String),
    Interrupted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchStep {
    Launch,
    Resolve,
}

/// One line of the dispatch trace, in the order the coordinator actually
/// processed things. Unlike the event log this order depends on timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub seq: u64,
    pub step: DispatchStep,
    pub trajectory: u32,
    pub depth: u32,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: RunState,
    pub status: RunStatus,
    pub best: Node,
    pub trace: Vec<DispatchRecord>,
    pub wall_time_s: f64,
    pub generation_latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct BatchKey {
    trajectory: u32,
    depth: u32,
}

enum GenWork {
    Proposal {
        key: BatchKey,
        index: usize,
        request: GeneratorRequest,
    },
    Post {
        key: BatchKey,
        reflection: Option<GeneratorRequest>,
        elite: Option<EliteJob>,
    },
}

struct EliteJob {
    pool: ElitePool,
    candidate: Node,
    capacity: usize,
    origin: RequestOrigin,
}

struct EvalWork {
    key: BatchKey,
    slot: u32,
    solution: String,
}

#[derive(Debug, Clone)]
struct CallResult {
    request: GeneratorRequest,
    result: Result<GeneratorResponse, String>,
    attempts: u32,
}

enum Msg {
    Proposal {
        key: BatchKey,
        index: usize,
        result: Result<GeneratorResponse, GatewayError>,
        attempts: u32,
    },
    Post {
        key: BatchKey,
        reflection: Option<CallResult>,
        elite: Option<(CallResult, EliteDecision)>,
    },
    Eval {
        key: BatchKey,
        slot: u32,
        outcome: EvalOutcome,
    },
}

struct RequestRecord {
    request: GeneratorRequest,
    response: Option<Result<GeneratorResponse, String>>,
    attempts: u32,
}

#[derive(Default)]
struct Slot {
    candidate: Option<String>,
    solution: Option<String>,
    node: Option<Node>,
    outcome: Option<EvalOutcome>,
    synthetic: bool,
}

#[derive(PartialEq)]
enum PostState {
    Waiting,
    Running,
    Done,
}

struct Batch {
    depth: u32,
    inspirations: Vec<NodeId>,
    prompt: String,
    requests: Vec<RequestRecord>,
    slots: Vec<Slot>,
    filled: u32,
    post: PostState,
    winner: Option<usize>,
    reflection: Option<CallResult>,
    elite: Option<(CallResult, EliteDecision)>,
}

fn send_retrying(gateway: &Gateway, request: &GeneratorRequest, retry: &crate::model::RetryPolicy, stop: &AtomicBool) -> (Result<GeneratorResponse, GatewayError>, u32) {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match gateway.generate(request) {
            Ok(r) => return (Ok(r), attempt),
            Err(e) if e.is_retryable() && attempt < retry.attempts && !stop.load(Ordering::Relaxed) => {
                let delay = retry.base_delay_ms.saturating_mul(1 << (attempt - 1).min(16));
                debug!(attempt, error = %e, delay_ms = delay, "retrying generator request");
                thread::sleep(Duration::from_millis(delay));
            }
            Err(e) => return (Err(e), attempt),
        }
    }
}

fn call(gateway: &Gateway, request: GeneratorRequest, retry: &crate::model::RetryPolicy, stop: &AtomicBool) -> CallResult {
    let (result, attempts) = send_retrying(gateway, &request, retry, stop);
    CallResult {
        request,
        result: result.map_err(|e| e.to_string()),
        attempts,
    }
}

fn gen_worker(
    gateway: Gateway,
    retry: crate::model::RetryPolicy,
    reflection_cap: usize,
    stop: Arc<AtomicBool>,
    work: Receiver<GenWork>,
    out: Sender<Msg>,
) {
    for job in work {
        let msg = match job {
            GenWork::Proposal { key, index, request } => {
                let (result, attempts) = send_retrying(&gateway, &request, &retry, &stop);
                Msg::Proposal {
                    key,
                    index,
                    result,
                    attempts,
                }
            }
            GenWork::Post { key, reflection, elite } => {
                let reflection = reflection.map(|r| call(&gateway, r, &retry, &stop));
                let elite = elite.map(|job| {
                    let mut candidate = job.candidate;
                    candidate.reflection = reflection.as_ref().and_then(|r| reflection_text(r, reflection_cap));
                    let prompt = elite_prompt(&job.pool, &candidate, job.capacity);
                    let req = gateway.request(prompt, 1, RequestPurpose::EliteDecision, job.origin);
                    let res = call(&gateway, req, &retry, &stop);
                    let decision = match &res.result {
                        Ok(r) => r
                            .candidates
                            .first()
                            .ok_or_else(|| "empty reply".to_string())
                            .and_then(|t| parse_elite_decision(t))
                            .unwrap_or_else(|e| {
                                debug!(error = %e, "unusable elite decision, rejecting");
                                EliteDecision::Reject
                            }),
                        Err(_) => EliteDecision::Reject,
                    };
                    (res, decision)
                });
                Msg::Post { key, reflection, elite }
            }
        };
        if out.send(msg).is_err() {
            break;
        }
    }
}

fn eval_worker(evaluator: Arc<dyn Evaluator>, work: Receiver<EvalWork>, out: Sender<Msg>) {
    for job in work {
        let outcome = evaluator.evaluate(&job.solution);
        if out
            .send(Msg::Eval {
                key: job.key,
                slot: job.slot,
                outcome,
            })
            .is_err()
        {
            break;
        }
    }
}

fn reflection_text(result: &CallResult, cap: usize) -> Option<String> {
    let text = result.result.as_ref().ok()?.candidates.first()?.trim();
    if text.is_empty() {
        return None;
    }
    Some(truncate_chars(text, cap))
}

struct Coordinator<'a> {
    engine: &'a Engine,
    state: RunState,
    runtime: Vec<TrajectoryRuntime>,
    open: Vec<VecDeque<Batch>>,
    pending: BTreeMap<BlockKey, Vec<Draft>>,
    cursor: Option<BlockKey>,
    log: &'a mut EventLog,
    gen_tx: Option<Sender<GenWork>>,
    eval_tx: Option<Sender<EvalWork>>,
    consecutive_failures: u32,
    commits: u64,
    abort: Option<String>,
    trace: Vec<DispatchRecord>,
    latency_ms: u64,
    eval_summary: String,
}

impl<'a> Coordinator<'a> {
    fn width(&self) -> u32 {
        self.state.config.width
    }

    fn bound(&self) -> u32 {
        self.state.config.dispatch.max_unresolved_batches_per_trajectory
    }

    fn trace(&mut self, step: DispatchStep, trajectory: u32, depth: u32) {
        let seq = self.trace.len() as u64;
        self.trace.push(DispatchRecord {
            seq,
            step,
            trajectory,
            depth,
        });
    }

    fn next_cutoff(&self) -> Option<super::Cutoff> {
        self.state
            .config
            .pruning
            .as_ref()
            .and_then(|p| p.cutoffs.get(self.state.cutoffs_applied).copied())
    }

    fn cutoff_at(&self, depth: u32) -> bool {
        self.state
            .config
            .pruning
            .as_ref()
            .is_some_and(|p| p.cutoffs.iter().any(|c| c.at_depth == depth))
    }

    fn has_block(&self, trajectory: u32, depth: u32) -> bool {
        depth < self.state.config.depth
            && self.runtime[trajectory as usize].pruned_at.is_none_or(|a| depth < a)
    }

    /// First step block at `depth` from trajectory `from` on, else whatever
    /// comes at the following depths.
    fn scan_from(&self, mut depth: u32, mut from: u32) -> Option<BlockKey> {
        loop {
            if depth >= self.state.config.depth {
                return None;
            }
            if let Some(c) = (from..self.width()).find(|&c| self.has_block(c, depth)) {
                return Some(BlockKey {
                    depth,
                    stage: 1,
                    trajectory: c,
                });
            }
            depth += 1;
            from = 0;
            if depth < self.state.config.depth && self.cutoff_at(depth) {
                return Some(BlockKey {
                    depth,
                    stage: 0,
                    trajectory: 0,
                });
            }
        }
    }

    fn advance(&self, key: BlockKey) -> Option<BlockKey> {
        if key.stage == 0 {
            self.scan_from(key.depth, 0)
        } else {
            self.scan_from(key.depth, key.trajectory + 1)
        }
    }

    fn drain_log(&mut self) -> Result<(), RunError> {
        while let Some(key) = self.cursor {
            let Some(drafts) = self.pending.remove(&key) else { break };
            for d in drafts {
                self.log.emit(&self.state.run_id, d).map_err(RunError::Log)?;
            }
            self.cursor = self.advance(key);
        }
        Ok(())
    }

    fn emit_now(&mut self, draft: Draft) -> Result<(), RunError> {
        self.log.emit(&self.state.run_id, draft).map_err(RunError::Log)
    }

    fn snapshot_for(&self, trajectory: u32, resolved: u32) -> (LocalMemory, ElitePool) {
        let rt = &self.runtime[trajectory as usize];
        let snap = rt
            .snapshots
            .iter()
            .find(|s| s.resolved == resolved)
            .or_else(|| rt.snapshots.last())
            .expect("at least one snapshot");
        (snap.memory.clone(), snap.elite.clone())
    }

    fn can_launch(&self, c: u32) -> bool {
        let t = &self.state.trajectories[c as usize];
        let rt = &self.runtime[c as usize];
        if t.status != TrajectoryStatus::Active || rt.launched >= self.state.config.depth {
            return false;
        }
        if self.open[c as usize].len() as u32 >= self.bound() {
            return false;
        }
        if let Some(cut) = self.next_cutoff() {
            if rt.launched >= cut.at_depth {
                return false;
            }
        }
        true
    }

    fn launch(&mut self, c: u32) {
        let d = self.runtime[c as usize].launched;
        let visible = (d + 1).saturating_sub(self.bound());
        let (memory, elite) = self.snapshot_for(c, visible);
        let cfg = &self.state.config;
        let kind = cfg.selector;
        let sel_cfg = cfg.selector_config.clone();
        let show_patterns = cfg.signals.failure_patterns;
        let traj = &mut self.state.trajectories[c as usize];
        let batch_seed = derive_seed(traj.seed, d as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
        let prefix = 1 + visible as usize;
        let picks = select_inspirations(kind, &mut traj.history[..prefix], &elite, &sel_cfg, &mut rng);
        let shown: Vec<&Node> = picks
            .iter()
            .filter_map(|id| traj.history[..prefix].iter().find(|n| n.node_id == *id))
            .collect();
        let prompt_memory = if show_patterns {
            memory
        } else {
            LocalMemory {
                artifacts: memory.artifacts,
                ..LocalMemory::default()
            }
        };
        let overview = (kind == SelectorKind::LlmElite && !elite.members.is_empty()).then(|| elite.overview());
        let bundle = build_proposal(&self.state.task, &shown, &prompt_memory, &self.eval_summary, overview);
        let prompt = render(&bundle);
        self.runtime[c as usize].launched += 1;
        self.trace(DispatchStep::Launch, c, d);
        self.dispatch(InflightBatch {
            trajectory: c,
            depth: d,
            inspirations: picks,
            prompt,
        });
    }

    /// Sends the generation requests of a batch and registers it as open.
    fn dispatch(&mut self, spec: InflightBatch) {
        let c = spec.trajectory;
        let k = self.state.config.samples;
        let seed = derive_seed(self.state.trajectories[c as usize].seed, spec.depth as u64);
        let chunks: Vec<(u32, u32)> = match self.state.config.dispatch.mode {
            DispatchMode::Batched => vec![(0, k)],
            DispatchMode::Streamed => (0..k).map(|i| (i, 1)).collect(),
        };
        let requests: Vec<RequestRecord> = chunks
            .iter()
            .map(|&(offset, count)| RequestRecord {
                request: self.engine.gateway.request(
                    spec.prompt.clone(),
                    count,
                    RequestPurpose::Proposal,
                    RequestOrigin {
                        trajectory: c,
                        depth: spec.depth,
                        sample_offset: offset,
                        seed,
                    },
                ),
                response: None,
                attempts: 0,
            })
            .collect();
        let key = BatchKey {
            trajectory: c,
            depth: spec.depth,
        };
        let work: Vec<GenWork> = requests
            .iter()
            .enumerate()
            .map(|(index, r)| GenWork::Proposal {
                key,
                index,
                request: r.request.clone(),
            })
            .collect();
        self.open[c as usize].push_back(Batch {
            depth: spec.depth,
            inspirations: spec.inspirations,
            prompt: spec.prompt,
            requests,
            slots: (0..k).map(|_| Slot::default()).collect(),
            filled: 0,
            post: PostState::Waiting,
            winner: None,
            reflection: None,
            elite: None,
        });
        if let Some(tx) = &self.gen_tx {
            for w in work {
                // Blocks while the queue is full.
                let _ = tx.send(w);
            }
        }
    }

    fn batch_mut(&mut self, key: BatchKey) -> Option<&mut Batch> {
        self.open[key.trajectory as usize]
            .iter_mut()
            .find(|b| b.depth == key.depth)
    }

    fn node_id(&self, key: BatchKey, slot: u32) -> NodeId {
        NodeId::for_sample(self.width(), self.state.config.samples, key.trajectory, key.depth, slot)
    }

    fn synthetic(&self, key: BatchKey, slot: u32, inspirations: &[NodeId], text: String, message: String) -> (Node, EvalOutcome) {
        let outcome = EvalOutcome::failed(ErrorClass::MalformedOutput, message);
        let mut node = Node::from_outcome(
            self.node_id(key, slot),
            Some(key.trajectory),
            text,
            &outcome,
            inspirations.to_vec(),
            key.depth + 1,
            slot,
        );
        node.metadata.synthetic = true;
        (node, outcome)
    }

    fn on_proposal(&mut self, key: BatchKey, index: usize, result: Result<GeneratorResponse, GatewayError>, attempts: u32) {
        let markers = self.state.task.solution_markers;
        let abort_after = self.state.config.retry.abort_after_consecutive;
        match &result {
            Ok(r) => {
                self.consecutive_failures = 0;
                self.latency_ms += r.latency_ms;
            }
            Err(e) => {
                self.consecutive_failures += 1;
                warn!(trajectory = key.trajectory, depth = key.depth, error = %e, "generation failed");
                if self.consecutive_failures >= abort_after && self.abort.is_none() {
                    self.abort = Some(format!("{} generator requests in a row failed; last error: {e}", self.consecutive_failures));
                }
            }
        }
        let Some(batch) = self.batch_mut(key) else { return };
        let (offset, count) = {
            let r = &batch.requests[index].request;
            (r.origin.sample_offset, r.sample_count)
        };
        let inspirations = batch.inspirations.clone();
        batch.requests[index].attempts = attempts;
        batch.requests[index].response = Some(result.as_ref().map(|r| r.clone()).map_err(|e| e.to_string()));
        let mut evals = Vec::new();
        let mut fills = Vec::new();
        for i in 0..count {
            let slot = offset + i;
            let candidate = match &result {
                Ok(r) => r.candidates.get(i as usize).cloned(),
                Err(_) => None,
            };
            match candidate {
                Some(text) => match extract_solution(&text, markers) {
                    Ok(solution) => {
                        evals.push((slot, solution));
                        fills.push((slot, Some(text), None));
                    }
                    Err(e) => {
                        let (node, outcome) = self.synthetic(key, slot, &inspirations, text.clone(), format!("no usable solution: {e}"));
                        fills.push((slot, Some(text), Some((node, outcome))));
                    }
                },
                None => {
                    let message = match &result {
                        Ok(r) => format!("generator returned {} of {count} samples", r.candidates.len()),
                        Err(e) => format!("generation failed: {e}"),
                    };
                    let (node, outcome) = self.synthetic(key, slot, &inspirations, String::new(), message);
                    fills.push((slot, None, Some((node, outcome))));
                }
            }
        }
        let batch = self.batch_mut(key).expect("batch is open");
        for (slot, text, synthetic) in fills {
            let s = &mut batch.slots[slot as usize];
            s.candidate = text;
            if let Some((node, outcome)) = synthetic {
                s.node = Some(node);
                s.outcome = Some(outcome);
                s.synthetic = true;
                batch.filled += 1;
            }
        }
        for (slot, solution) in &evals {
            batch.slots[*slot as usize].solution = Some(solution.clone());
        }
        for (slot, solution) in evals {
            if let Some(tx) = &self.eval_tx {
                let _ = tx.send(EvalWork { key, slot, solution });
            }
        }
        self.progress(key.trajectory);
    }

    fn on_eval(&mut self, key: BatchKey, slot: u32, outcome: EvalOutcome) {
        let id = self.node_id(key, slot);
        let Some(batch) = self.batch_mut(key) else { return };
        let solution = batch.slots[slot as usize].solution.clone().unwrap_or_default();
        let node = Node::from_outcome(
            id,
            Some(key.trajectory),
            solution,
            &outcome,
            batch.inspirations.clone(),
            key.depth + 1,
            slot,
        );
        let s = &mut batch.slots[slot as usize];
        s.node = Some(node);
        s.outcome = Some(outcome);
        batch.filled += 1;
        self.progress(key.trajectory);
    }

    /// Moves the oldest batch of a trajectory forward as far as it can go.
    fn progress(&mut self, c: u32) {
        loop {
            let k = self.state.config.samples;
            let cfg = &self.state.config;
            let want_reflection = cfg.signals.reflection;
            let elite_on = cfg.selector == SelectorKind::LlmElite;
            let capacity = cfg.selector_config.elite_capacity;
            let seed = self.state.trajectories[c as usize].seed;
            let pool = self.state.trajectories[c as usize].elite.clone();
            let Some(batch) = self.open[c as usize].front_mut() else { return };
            if batch.filled < k {
                return;
            }
            match batch.post {
                PostState::Running => return,
                PostState::Done => {}
                PostState::Waiting => {
                    let scores: Vec<f64> = batch.slots.iter().map(|s| s.node.as_ref().unwrap().score).collect();
                    let w = local_best_index(&scores).expect("samples is positive");
                    batch.winner = Some(w);
                    let winner = batch.slots[w].node.clone().unwrap();
                    let origin = RequestOrigin {
                        trajectory: c,
                        depth: batch.depth,
                        sample_offset: 0,
                        seed: derive_seed(seed, batch.depth as u64 ^ (1 << 40)),
                    };
                    let reflection = (want_reflection && !winner.is_failure()).then(|| {
                        self.engine.gateway.request(
                            reflection_prompt(&winner.solution, winner.score),
                            1,
                            RequestPurpose::Reflection,
                            origin,
                        )
                    });
                    let elite = (elite_on && !winner.is_failure() && !overrides(&pool, &winner)).then(|| EliteJob {
                        pool,
                        candidate: winner,
                        capacity,
                        origin,
                    });
                    if reflection.is_none() && elite.is_none() {
                        batch.post = PostState::Done;
                    } else {
                        batch.post = PostState::Running;
                        let key = BatchKey {
                            trajectory: c,
                            depth: batch.depth,
                        };
                        if let Some(tx) = &self.gen_tx {
                            let _ = tx.send(GenWork::Post { key, reflection, elite });
                        }
                        return;
                    }
                }
            }
            let batch = self.open[c as usize].pop_front().unwrap();
            self.resolve(c, batch);
        }
    }

    fn on_post(&mut self, key: BatchKey, reflection: Option<CallResult>, elite: Option<(CallResult, EliteDecision)>) {
        let Some(batch) = self.batch_mut(key) else { return };
        batch.reflection = reflection;
        batch.elite = elite;
        batch.post = PostState::Done;
        self.progress(key.trajectory);
    }

    fn resolve(&mut self, c: u32, mut batch: Batch) {
        let cfg = self.state.config.clone();
        let timings = self.engine.log_timings;
        let w = batch.winner.expect("winner chosen");
        let reflection = batch
            .reflection
            .as_ref()
            .and_then(|r| reflection_text(r, cfg.signals.reflection_cap));
        let mut nodes: Vec<Node> = batch.slots.iter_mut().map(|s| s.node.take().unwrap()).collect();
        nodes[w].reflection = reflection.clone();
        let outcomes: Vec<EvalOutcome> = batch.slots.iter().map(|s| s.outcome.clone().unwrap()).collect();
        let evaluated = batch.slots.iter().filter(|s| !s.synthetic).count() as u64;
        let synthetic = cfg.samples as u64 - evaluated;

        let key = BatchKey {
            trajectory: c,
            depth: batch.depth,
        };
        let mut drafts = Vec::new();
        for r in &batch.requests {
            let o = r.request.origin;
            let mut p = json!({
                "purpose": "proposal",
                "depth": batch.depth,
                "sample_offset": o.sample_offset,
                "sample_count": r.request.sample_count,
                "prompt_hash": crate::gateway::prompt_hash(&r.request.rendered_prompt),
                "inspirations": batch.inspirations,
                "max_output_tokens": r.request.max_output_tokens,
                "temperature": r.request.temperature,
                "reasoning_mode": r.request.reasoning_mode,
            });
            if o.sample_offset == 0 {
                p["prompt"] = json!(batch.prompt);
            }
            drafts.push(Draft::new(EventKind::GenRequest, p).trajectory(c));
        }
        for r in &batch.requests {
            let o = r.request.origin;
            let ids: Vec<NodeId> = (0..r.request.sample_count).map(|i| self.node_id(key, o.sample_offset + i)).collect();
            let mut p = json!({
                "purpose": "proposal",
                "depth": batch.depth,
                "sample_offset": o.sample_offset,
                "attempts": r.attempts,
            });
            match r.response.as_ref().expect("all requests answered") {
                Ok(resp) => {
                    p["node_ids"] = json!(ids[..resp.candidates.len().min(ids.len())]);
                    p["candidates"] = json!(resp.candidates);
                    p["usage"] = json!(resp.usage);
                    if timings {
                        p["latency_ms"] = json!(resp.latency_ms);
                    }
                }
                Err(e) => p["error"] = json!(e),
            }
            drafts.push(Draft::new(EventKind::GenResponse, p).trajectory(c));
        }
        for (slot, node) in nodes.iter().enumerate() {
            let synthetic = node.metadata.synthetic;
            if !synthetic {
                drafts.push(
                    Draft::new(EventKind::EvalStart, json!({"slot": slot}))
                        .trajectory(c)
                        .node(node.node_id),
                );
            }
            let mut p = json!({
                "slot": slot,
                "depth": batch.depth,
                "score": node.score,
                "error_class": node.metadata.error_class,
                "synthetic": synthetic,
                "reported_score": node.metadata.reported_score,
                "verified_score": node.metadata.verified_score,
                "verification": node.metadata.verification,
                "feedback": node.metadata.feedback,
            });
            if timings {
                p["wall_time_s"] = json!(node.metadata.wall_time_s);
            }
            drafts.push(Draft::new(EventKind::EvalDone, p).trajectory(c).node(node.node_id));
        }

        let traj = &mut self.state.trajectories[c as usize];
        let committed = match commit_local_best(traj, nodes, cfg.samples, cfg.depth) {
            Ok(n) => n,
            Err(e) => {
                // Only reachable through a coordinator bug; keep the run alive.
                warn!(trajectory = c, error = %e, "commit rejected");
                return;
            }
        };
        if cfg.signals.failure_patterns {
            traj.memory = accumulate_failure_patterns(&traj.memory, &outcomes, cfg.signals.pattern_count);
        }
        if let Some(r) = &reflection {
            traj.memory.reflections.push(r.clone());
        }
        let mut elite_payload = None;
        if cfg.selector == SelectorKind::LlmElite {
            let decision = if committed.is_failure() {
                EliteDecision::Reject
            } else if overrides(&traj.elite, &committed) {
                EliteDecision::Add
            } else {
                batch.elite.as_ref().map(|(_, d)| d.clone()).unwrap_or(EliteDecision::Reject)
            };
            traj.elite = apply_decision(&traj.elite, &committed, cfg.selector_config.elite_capacity, decision.clone());
            elite_payload = Some(json!({
                "decision": decision,
                "members": traj.elite.members.iter().map(|m| m.node_id).collect::<Vec<_>>(),
            }));
        }
        let best_score = traj.best.score;
        let best_id = traj.best.node_id;
        drafts.push(
            Draft::new(
                EventKind::Commit,
                json!({
                    "depth": traj.depth,
                    "slot": w,
                    "score": committed.score,
                    "error_class": committed.metadata.error_class,
                    "inspirations": committed.inspiration_parents,
                    "trajectory_best_score": best_score,
                    "trajectory_best_node_id": best_id,
                    "reflection": reflection,
                    "elite": elite_payload,
                }),
            )
            .trajectory(c)
            .node(committed.node_id),
        );
        for (purpose, res) in [
            ("reflection", batch.reflection.as_ref()),
            ("elite_decision", batch.elite.as_ref().map(|(r, _)| r)),
        ] {
            let Some(res) = res else { continue };
            drafts.push(
                Draft::new(
                    EventKind::GenRequest,
                    json!({
                        "purpose": purpose,
                        "depth": batch.depth,
                        "prompt_hash": crate::gateway::prompt_hash(&res.request.rendered_prompt),
                        "prompt": res.request.rendered_prompt,
                    }),
                )
                .trajectory(c)
                .node(committed.node_id),
            );
            let mut p = json!({"purpose": purpose, "depth": batch.depth, "attempts": res.attempts});
            match &res.result {
                Ok(resp) => {
                    p["candidates"] = json!(resp.candidates);
                    if timings {
                        p["latency_ms"] = json!(resp.latency_ms);
                    }
                }
                Err(e) => p["error"] = json!(e),
            }
            drafts.push(Draft::new(EventKind::GenResponse, p).trajectory(c).node(committed.node_id));
        }

        let generations = batch.requests.len() as u64
            + batch.reflection.is_some() as u64
            + batch.elite.is_some() as u64;
        let ledger = &mut self.state.ledger;
        ledger.consumed_evaluations += evaluated;
        ledger.synthetic_failures += synthetic;
        ledger.consumed_generations += generations;

        let traj = &self.state.trajectories[c as usize];
        let snap = Snapshot {
            resolved: traj.depth,
            memory: traj.memory.clone(),
            elite: traj.elite.clone(),
        };
        let keep = self.bound() as usize + 1;
        let rt = &mut self.runtime[c as usize];
        rt.snapshots.push(snap);
        if rt.snapshots.len() > keep {
            let extra = rt.snapshots.len() - keep;
            rt.snapshots.drain(..extra);
        }
        self.pending.insert(
            BlockKey {
                depth: batch.depth,
                stage: 1,
                trajectory: c,
            },
            drafts,
        );
        self.commits += 1;
        self.trace(DispatchStep::Resolve, c, batch.depth);
        debug!(trajectory = c, depth = batch.depth, score = committed.score, "committed");
    }

    fn open_count(&self) -> usize {
        self.open.iter().map(VecDeque::len).sum()
    }

    fn try_prune(&mut self) {
        let Some(cut) = self.next_cutoff() else { return };
        if self.open_count() > 0 {
            return;
        }
        let ready = self
            .state
            .trajectories
            .iter()
            .filter(|t| t.status == TrajectoryStatus::Active)
            .all(|t| t.depth == cut.at_depth);
        if !ready {
            return;
        }
        let before: Vec<u32> = self
            .state
            .trajectories
            .iter()
            .filter(|t| t.status == TrajectoryStatus::Active)
            .map(|t| t.trajectory_id)
            .collect();
        let pruned = apply_prune(&mut self.state, cut).expect("barrier checked");
        for &c in &pruned {
            self.runtime[c as usize].pruned_at = Some(cut.at_depth);
        }
        let kept: Vec<u32> = before.into_iter().filter(|c| !pruned.contains(c)).collect();
        info!(at_depth = cut.at_depth, kept = kept.len(), pruned = pruned.len(), "pruned trajectories");
        let scores: BTreeMap<u32, f64> = self
            .state
            .trajectories
            .iter()
            .filter(|t| kept.contains(&t.trajectory_id) || pruned.contains(&t.trajectory_id))
            .map(|t| (t.trajectory_id, t.best_committed_score()))
            .collect();
        self.pending.insert(
            BlockKey {
                depth: cut.at_depth,
                stage: 0,
                trajectory: 0,
            },
            vec![Draft::new(
                EventKind::Prune,
                json!({
                    "at_depth": cut.at_depth,
                    "keep_fraction": cut.keep_fraction,
                    "kept": kept,
                    "pruned": pruned,
                    "scores": scores,
                    "planned_evaluations": self.state.ledger.planned_evaluations,
                }),
            )],
        );
    }

    fn checkpoint(&mut self) -> Result<(), RunError> {
        let Some(path) = self.engine.checkpoint_path.clone() else { return Ok(()) };
        self.log.flush().map_err(RunError::Log)?;
        let mut inflight: Vec<InflightBatch> = self
            .open
            .iter()
            .enumerate()
            .flat_map(|(c, q)| {
                q.iter().map(move |b| InflightBatch {
                    trajectory: c as u32,
                    depth: b.depth,
                    inspirations: b.inspirations.clone(),
                    prompt: b.prompt.clone(),
                })
            })
            .collect();
        inflight.sort_by_key(|b| (b.depth, b.trajectory));
        let cp = Checkpoint {
            state: self.state.clone(),
            runtime: self.runtime.clone(),
            inflight,
            pending: self
                .pending
                .iter()
                .map(|(k, d)| PendingBlock {
                    key: *k,
                    drafts: d.clone(),
                })
                .collect(),
            cursor: self.cursor,
            log_bytes: self.log.position(),
            next_ts: self.log.next_ts(),
            consecutive_failures: self.consecutive_failures,
            commits: self.commits,
        };
        save_checkpoint(&path, &cp).map_err(RunError::Checkpoint)
    }

    fn finished(&self) -> bool {
        self.open_count() == 0
            && self
                .state
                .trajectories
                .iter()
                .all(|t| t.status != TrajectoryStatus::Active)
    }

    fn drive(mut self, rx: Receiver<Msg>, started: Instant) -> Result<RunOutcome, RunError> {
        let every = self.state.config.checkpoint_every;
        let mut last_checkpoint = self.commits;
        let status = loop {
            if self.engine.shutdown.load(Ordering::SeqCst) {
                info!("shutdown requested, checkpointing");
                kill_all_groups();
                self.drain_log()?;
                self.checkpoint()?;
                break RunStatus::Interrupted;
            }
            self.try_prune();
            if self.abort.is_none() {
                for c in 0..self.width() {
                    while self.can_launch(c) {
                        self.launch(c);
                    }
                }
            }
            self.drain_log()?;
            if every > 0 && self.commits >= last_checkpoint + every {
                last_checkpoint = self.commits;
                self.checkpoint()?;
            }
            if self.open_count() == 0 && (self.abort.is_some() || self.finished()) {
                break match self.abort.clone() {
                    Some(reason) => RunStatus::Aborted(reason),
                    None => RunStatus::Completed,
                };
            }
            match rx.recv_timeout(Duration::from_millis(100)) {
                Ok(Msg::Proposal {
                    key,
                    index,
                    result,
                    attempts,
                }) => self.on_proposal(key, index, result, attempts),
                Ok(Msg::Eval { key, slot, outcome }) => self.on_eval(key, slot, outcome),
                Ok(Msg::Post { key, reflection, elite }) => self.on_post(key, reflection, elite),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    break RunStatus::Aborted("worker pools stopped unexpectedly".into());
                }
            }
        };
        self.gen_tx = None;
        self.eval_tx = None;
        let best = best_overall(&self.state);
        if status != RunStatus::Interrupted {
            if let RunStatus::Aborted(_) = status {
                // Whatever finished is kept, even where the canonical order
                // has gaps.
                let rest = std::mem::take(&mut self.pending);
                for (_, drafts) in rest {
                    for d in drafts {
                        self.emit_now(d)?;
                    }
                }
            }
            let (label, reason) = match &status {
                RunStatus::Completed => ("completed", None),
                RunStatus::Aborted(r) => ("aborted", Some(r.clone())),
                RunStatus::Interrupted => unreachable!(),
            };
            let finish = json!({
                "status": label,
                "reason": reason,
                "best_node_id": best.node_id,
                "best_score": best.score,
                "best_trajectory_id": best.trajectory_id,
                "ledger": self.state.ledger,
            });
            self.emit_now(Draft::new(EventKind::Finish, finish))?;
            if self.engine.checkpoint_path.is_some() {
                self.checkpoint()?;
            }
        }
        self.log.flush().map_err(RunError::Log)?;
        Ok(RunOutcome {
            best,
            status,
            trace: self.trace,
            wall_time_s: started.elapsed().as_secs_f64(),
            generation_latency_ms: self.latency_ms,
            state: self.state,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn start(
    engine: &Engine,
    state: RunState,
    runtime: Vec<TrajectoryRuntime>,
    pending: BTreeMap<BlockKey, Vec<Draft>>,
    cursor: Option<BlockKey>,
    consecutive_failures: u32,
    commits: u64,
    inflight: Vec<InflightBatch>,
    log: &mut EventLog,
) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    let cfg = state.config.clone();
    let (gen_tx, gen_rx) = bounded::<GenWork>(cfg.workers.queue_capacity);
    let (eval_tx, eval_rx) = bounded::<EvalWork>(cfg.workers.queue_capacity);
    let (msg_tx, msg_rx) = unbounded::<Msg>();
    for i in 0..cfg.workers.generation {
        let (g, r, s, rx, tx) = (
            engine.gateway.clone(),
            cfg.retry.clone(),
            engine.shutdown.clone(),
            gen_rx.clone(),
            msg_tx.clone(),
        );
        let cap = cfg.signals.reflection_cap;
        thread::Builder::new()
            .name(format!("gen-{i}"))
            .spawn(move || gen_worker(g, r, cap, s, rx, tx))
            .expect("spawning a worker thread");
    }
    for i in 0..cfg.workers.evaluation {
        let (e, rx, tx) = (engine.evaluator.clone(), eval_rx.clone(), msg_tx.clone());
        thread::Builder::new()
            .name(format!("eval-{i}"))
            .spawn(move || eval_worker(e, rx, tx))
            .expect("spawning a worker thread");
    }
    drop(msg_tx);
    let width = cfg.width as usize;
    let mut coord = Coordinator {
        engine,
        eval_summary: state.task.evaluator.summary(),
        state,
        runtime,
        open: (0..width).map(|_| VecDeque::new()).collect(),
        pending,
        cursor,
        log,
        gen_tx: Some(gen_tx),
        eval_tx: Some(eval_tx),
        consecutive_failures,
        commits,
        abort: None,
        trace: Vec::new(),
        latency_ms: 0,
    };
    for b in inflight {
        coord.dispatch(b);
    }
    coord.drive(msg_rx, started)
}

/// Runs a freshly initialized state to completion, writing its events to
/// `log` (starting with `setup`).
pub fn run(state: RunState, engine: &Engine, log: &mut EventLog) -> Result<RunOutcome, RunError> {
    let cfg = &state.config;
    let setup = json!({
        "task_id": state.task.task_id,
        "restart_index": state.restart_index,
        "width": cfg.width,
        "depth": cfg.depth,
        "samples": cfg.samples,
        "selector": cfg.selector,
        "planned_evaluations": state.ledger.planned_evaluations,
        "initial_score": state.initial.score,
        "initial_solution": state.initial.solution,
        "score_direction": state.task.score_direction,
        "evaluator": state.task.evaluator.summary(),
        "config": cfg,
    });
    log.emit(&state.run_id, Draft::new(EventKind::Setup, setup))
        .map_err(RunError::Log)?;
    info!(run_id = %state.run_id, planned = state.ledger.planned_evaluations, "run started");
    let runtime = (0..cfg.width).map(|_| TrajectoryRuntime::new()).collect();
    let cursor = Some(BlockKey {
        depth: 0,
        stage: 1,
        trajectory: 0,
    });
    start(engine, state, runtime, BTreeMap::new(), cursor, 0, 0, Vec::new(), log)
}

/// Continues from a checkpoint. `log` must already be positioned at the
/// checkpoint's byte offset (see [`EventLog::reopen`]).
pub fn resume(checkpoint: Checkpoint, engine: &Engine, log: &mut EventLog) -> Result<RunOutcome, RunError> {
    if checkpoint.runtime.len() != checkpoint.state.trajectories.len() {
        return Err(RunError::BadCheckpoint("runtime and trajectory counts differ".into()));
    }
    if log.position() != checkpoint.log_bytes || log.next_ts() != checkpoint.next_ts {
        return Err(RunError::BadCheckpoint("event log is not at the checkpoint position".into()));
    }
    info!(run_id = %checkpoint.state.run_id, commits = checkpoint.commits, "resuming");
    let pending = checkpoint.pending.into_iter().map(|b| (b.key, b.drafts)).collect();
    start(
        engine,
        checkpoint.state,
        checkpoint.runtime,
        pending,
        checkpoint.cursor,
        checkpoint.consecutive_failures,
        checkpoint.commits,
        checkpoint.inflight,
        log,
    )
}

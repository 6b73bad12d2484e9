//! Bounded elite pool curated by a decision provider, with a monotonic
//! override: a candidate that beats every member always gets in.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::model::Node;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EliteDecision {
    Add,
    /// Swap out the member at this position.
    Replace(usize),
    Reject,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElitePool {
    pub members: Vec<Node>,
}

impl ElitePool {
    pub fn max_score(&self) -> Option<f64> {
        self.members.iter().map(|m| m.score).reduce(f64::max)
    }

    /// Text-only overview for prompts: one line per member, no code.
    pub fn overview(&self) -> String {
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let summary = m.reflection.as_deref().unwrap_or("(no summary)").replace('\n', " ");
                format!("[{i}] node {} score {}: {summary}", m.node_id, m.score)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Decides what to do with a candidate that does not beat the pool.
pub trait DecisionProvider {
    fn decide(&self, pool: &ElitePool, candidate: &Node) -> Result<EliteDecision, String>;
}

/// Returns scripted decisions in order, then `Reject`.
#[derive(Debug, Default)]
pub struct ScriptedDecisions {
    queue: Mutex<Vec<Result<EliteDecision, String>>>,
    calls: Mutex<usize>,
}

impl ScriptedDecisions {
    pub fn new(decisions: Vec<Result<EliteDecision, String>>) -> Self {
        let mut queue = decisions;
        queue.reverse();
        Self {
            queue: Mutex::new(queue),
            calls: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap()
    }
}

impl DecisionProvider for ScriptedDecisions {
    fn decide(&self, _: &ElitePool, _: &Node) -> Result<EliteDecision, String> {
        *self.calls.lock().unwrap() += 1;
        self.queue.lock().unwrap().pop().unwrap_or(Ok(EliteDecision::Reject))
    }
}

impl<F> DecisionProvider for F
where
    F: Fn(&ElitePool, &Node) -> Result<EliteDecision, String>,
{
    fn decide(&self, pool: &ElitePool, candidate: &Node) -> Result<EliteDecision, String> {
        self(pool, candidate)
    }
}

/// Whether `candidate` is admitted without consulting the provider.
pub fn overrides(pool: &ElitePool, candidate: &Node) -> bool {
    !candidate.is_failure() && pool.max_score().is_none_or(|m| candidate.score > m)
}

/// Applies the monotonic override, then the provider's decision.
///
/// Failed candidates are never admitted. An `Add` on a full pool and a
/// `Replace` with an out-of-range position are treated as `Reject`, as is
/// a provider error.
pub fn elite_pool_update(
    pool: &ElitePool,
    candidate: &Node,
    capacity: usize,
    provider: &dyn DecisionProvider,
) -> ElitePool {
    let decision = if candidate.is_failure() {
        EliteDecision::Reject
    } else if overrides(pool, candidate) {
        EliteDecision::Add
    } else {
        provider.decide(pool, candidate).unwrap_or(EliteDecision::Reject)
    };
    apply_decision(pool, candidate, capacity, decision)
}

/// Applies a decision made earlier (for example by a worker thread).
pub fn apply_decision(pool: &ElitePool, candidate: &Node, capacity: usize, decision: EliteDecision) -> ElitePool {
    let mut next = pool.clone();
    let forced = overrides(pool, candidate);
    match decision {
        _ if forced => {
            if next.members.len() >= capacity {
                // Lowest score leaves; among equals, the most recent one.
                let (worst, _) = next
                    .members
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.score.total_cmp(&b.1.score).then(b.0.cmp(&a.0)))
                    .expect("full pool is non-empty");
                next.members[worst] = candidate.clone();
            } else {
                next.members.push(candidate.clone());
            }
        }
        _ if candidate.is_failure() => {}
        EliteDecision::Add if next.members.len() < capacity => next.members.push(candidate.clone()),
        EliteDecision::Replace(j) if j < next.members.len() => next.members[j] = candidate.clone(),
        _ => {}
    }
    next
}

/// Prompt asking the generator to curate the pool.
pub fn elite_prompt(pool: &ElitePool, candidate: &Node, capacity: usize) -> String {
    let summary = candidate.reflection.as_deref().unwrap_or("(no summary)").replace('\n', " ");
    format!(
        "You maintain a pool of at most {capacity} diverse, high-quality solutions.\n\
         Current pool:\n{}\n\nNew candidate (score {}): {summary}\n\n\
         Answer with exactly one line: ADD, REPLACE <index>, or REJECT.\n",
        if pool.members.is_empty() { "(empty)".to_string() } else { pool.overview() },
        candidate.score,
    )
}

/// Reads the first `ADD`, `REPLACE <j>` or `REJECT` token in a reply.
pub fn parse_elite_decision(text: &str) -> Result<EliteDecision, String> {
    let upper = text.to_ascii_uppercase();
    for line in upper.lines() {
        let mut words = line
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty());
        while let Some(w) = words.next() {
            match w {
                "ADD" => return Ok(EliteDecision::Add),
                "REJECT" => return Ok(EliteDecision::Reject),
                "REPLACE" => {
                    return words
                        .next()
                        .and_then(|j| j.parse().ok())
                        .map(EliteDecision::Replace)
                        .ok_or_else(|| "REPLACE without an index".to_string())
                }
                _ => {}
            }
        }
    }
    Err(format!("no decision in reply {:?}", text.chars().take(80).collect::<String>()))
}

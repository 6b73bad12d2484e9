//! Deterministic generators.
//!
//! Each output depends only on the request's prompt and origin (seed and
//! sample position), never on call order, so concurrent and retried calls
//! reproduce exactly and a batch answered as K single-sample requests
//! matches the same batch answered at once.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GatewayError, Generator, GeneratorRequest, GeneratorResponse, Usage};

/// Lowercase hex SHA-256 of a rendered prompt.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

fn mix(prompt: &str, seed: u64, sample: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    h.update(seed.to_le_bytes());
    h.update(sample.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

fn respond(request: &GeneratorRequest, candidates: Vec<String>, started: Instant) -> GeneratorResponse {
    let output_tokens = candidates.iter().map(|c| c.chars().count().div_ceil(4) as u64).collect();
    GeneratorResponse {
        usage: Usage {
            prompt_tokens: request.rendered_prompt.chars().count().div_ceil(4) as u64,
            output_tokens,
        },
        candidates,
        latency_ms: started.elapsed().as_millis() as u64,
    }
}

/// Emits pseudo-random decimal numbers in `[0, 1)`, one per sample.
///
/// Paired with an evaluator that reads the solution as its own score, this
/// gives a search whose scores are noise: useful to exercise budget and
/// scheduling without any model.
#[derive(Debug, Clone, Default)]
pub struct SyntheticGenerator {
    pub fail_every: Option<u32>,
}

impl SyntheticGenerator {
    pub fn candidate(prompt: &str, seed: u64, sample: u32) -> String {
        let bits = mix(prompt, seed, sample) >> 11;
        format!("{:.9}", bits as f64 / (1u64 << 53) as f64)
    }
}

impl Generator for SyntheticGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        let started = Instant::now();
        let o = request.origin;
        let candidates = (0..request.sample_count)
            .map(|i| {
                let sample = o.sample_offset + i;
                match self.fail_every {
                    Some(n) if n > 0 && (sample + 1) % n == 0 => "not a number".to_string(),
                    _ => Self::candidate(&request.rendered_prompt, o.seed, sample),
                }
            })
            .collect();
        Ok(respond(request, candidates, started))
    }
}

/// One line of a mock generator script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// [`prompt_hash`] of the prompt this entry answers, or `*` for any prompt.
    pub prompt_hash: String,
    pub candidates: Vec<String>,
}

/// Replays scripted candidates keyed by prompt hash.
///
/// Entries for the same hash are consumed in order along a trajectory: the
/// batch at depth `d` gets entry `d`, and an exhausted list repeats its last
/// entry. Keying on depth rather than arrival time keeps the assignment
/// stable under concurrency. A batch's sample `i` is `candidates[i % len]`.
/// Prompts without an entry fall back to `*` entries, and then to
/// [`SyntheticGenerator`].
#[derive(Debug, Clone, Default)]
pub struct ScriptedGenerator {
    entries: HashMap<String, Vec<Vec<String>>>,
}

impl ScriptedGenerator {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let mut map: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        for e in entries {
            map.entry(e.prompt_hash).or_default().push(e.candidates);
        }
        Self { entries: map }
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<ScriptEntry>, _>>()?;
        Ok(Self::new(entries))
    }

    pub fn from_path(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_jsonl(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    fn lookup(&self, hash: &str, depth: u32) -> Option<&Vec<String>> {
        let queue = self.entries.get(hash).or_else(|| self.entries.get("*"))?;
        // Later depths consume later entries; an exhausted queue repeats its last entry.
        queue.get((depth as usize).min(queue.len() - 1)).filter(|c| !c.is_empty())
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        let started = Instant::now();
        let hash = prompt_hash(&request.rendered_prompt);
        let o = request.origin;
        let candidates = match self.lookup(&hash, o.depth) {
            Some(list) => (0..request.sample_count)
                .map(|i| list[(o.sample_offset + i) as usize % list.len()].clone())
                .collect(),
            None => (0..request.sample_count)
                .map(|i| SyntheticGenerator::candidate(&request.rendered_prompt, o.seed, o.sample_offset + i))
                .collect(),
        };
        Ok(respond(request, candidates, started))
    }
}

/// Adapts a closure `(request, sample index) -> candidate` into a generator.
pub struct FnGenerator<F>(pub F);

impl<F> Generator for FnGenerator<F>
where
    F: Fn(&GeneratorRequest, u32) -> Option<String> + Send + Sync,
{
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        let started = Instant::now();
        let candidates = (0..request.sample_count)
            .filter_map(|i| (self.0)(request, request.origin.sample_offset + i))
            .collect();
        Ok(respond(request, candidates, started))
    }
}

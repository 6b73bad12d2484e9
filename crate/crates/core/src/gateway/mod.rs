//! The generator behind a request/response contract.
//!
//! [`Gateway`] wraps any [`Generator`] backend with the token-budget
//! preflight: prompts whose estimated size exceeds the input allowance are
//! refused before any network traffic, and every request asks for at most
//! `program_max` output tokens.

pub mod extract;
pub mod http;
pub mod mock;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract_solution, ExtractError, BLOCK_END, BLOCK_START};
pub use http::{HttpGenerator, HttpSettings};
pub use mock::{prompt_hash, FnGenerator, ScriptEntry, ScriptedGenerator, SyntheticGenerator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("prompt needs about {estimated} tokens but only {limit} are available for input")]
    PromptTooLarge { estimated: u64, limit: u64 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("generator returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unusable generator response: {0}")]
    Protocol(String),
    #[error("generator configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Whether a later attempt could succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Status { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("token budget {program_max} + {input_plus_reasoning_max} does not equal context {context_total}")]
pub struct TokenBudgetError {
    pub context_total: u64,
    pub program_max: u64,
    pub input_plus_reasoning_max: u64,
}

/// Split of the context window between the emitted program and everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTokenBudget")]
pub struct TokenBudget {
    pub context_total: u64,
    pub program_max: u64,
    pub input_plus_reasoning_max: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTokenBudget {
    context_total: u64,
    program_max: u64,
    input_plus_reasoning_max: u64,
}

impl TryFrom<RawTokenBudget> for TokenBudget {
    type Error = TokenBudgetError;
    fn try_from(r: RawTokenBudget) -> Result<Self, Self::Error> {
        TokenBudget::new(r.context_total, r.program_max, r.input_plus_reasoning_max)
    }
}

impl TokenBudget {
    pub fn new(
        context_total: u64,
        program_max: u64,
        input_plus_reasoning_max: u64,
    ) -> Result<Self, TokenBudgetError> {
        if program_max.checked_add(input_plus_reasoning_max) != Some(context_total) || program_max == 0 {
            return Err(TokenBudgetError {
                context_total,
                program_max,
                input_plus_reasoning_max,
            });
        }
        Ok(Self {
            context_total,
            program_max,
            input_plus_reasoning_max,
        })
    }
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            context_total: 49_152,
            program_max: 15_536,
            input_plus_reasoning_max: 33_616,
        }
    }
}

/// Estimates how many tokens a prompt will use.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

/// Four characters per token plus a 10% margin, rounded up. Deliberately
/// pessimistic so the server never rejects a request we let through.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharHeuristic;

impl TokenCounter for CharHeuristic {
    fn count(&self, text: &str) -> u64 {
        let chars = text.chars().count() as u64;
        (chars * 11).div_ceil(40)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RequestPurpose {
    #[default]
    Proposal,
    Reflection,
    EliteDecision,
}

/// Where a request comes from. Mocks derive their output from this, so a
/// batch split into several requests sees the same samples as one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RequestOrigin {
    pub trajectory: u32,
    pub depth: u32,
    /// Position of the first requested sample within its local batch.
    pub sample_offset: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub rendered_prompt: String,
    pub sample_count: u32,
    pub temperature: f64,
    pub max_output_tokens: u64,
    pub reasoning_mode: String,
    #[serde(default)]
    pub purpose: RequestPurpose,
    #[serde(default)]
    pub origin: RequestOrigin,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    /// One entry per returned candidate.
    pub output_tokens: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub candidates: Vec<String>,
    pub usage: Usage,
    pub latency_ms: u64,
}

/// A backend that turns prompts into candidate texts.
pub trait Generator: Send + Sync {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError>;
}

impl<G: Generator + ?Sized> Generator for Arc<G> {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        (**self).generate(request)
    }
}

/// Sampling settings shared by every request of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSettings {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_reasoning")]
    pub reasoning_mode: String,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_reasoning() -> String {
    "high".into()
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            temperature: default_temperature(),
            reasoning_mode: default_reasoning(),
        }
    }
}

/// Budget-enforcing front end for a backend.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Generator>,
    budget: TokenBudget,
    settings: GenerationSettings,
    counter: Arc<dyn TokenCounter>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Generator>, budget: TokenBudget, settings: GenerationSettings) -> Self {
        Self {
            backend,
            budget,
            settings,
            counter: Arc::new(CharHeuristic),
        }
    }

    pub fn with_counter(mut self, counter: Arc<dyn TokenCounter>) -> Self {
        self.counter = counter;
        self
    }

    pub fn budget(&self) -> TokenBudget {
        self.budget
    }

    /// A request for `sample_count` samples under this gateway's settings.
    pub fn request(
        &self,
        prompt: String,
        sample_count: u32,
        purpose: RequestPurpose,
        origin: RequestOrigin,
    ) -> GeneratorRequest {
        GeneratorRequest {
            rendered_prompt: prompt,
            sample_count,
            temperature: self.settings.temperature,
            max_output_tokens: self.budget.program_max,
            reasoning_mode: self.settings.reasoning_mode.clone(),
            purpose,
            origin,
        }
    }

    /// Refuses prompts that do not fit the input allowance.
    pub fn preflight(&self, request: &GeneratorRequest) -> Result<(), GatewayError> {
        let estimated = self.counter.count(&request.rendered_prompt);
        let limit = self.budget.input_plus_reasoning_max;
        if estimated > limit {
            return Err(GatewayError::PromptTooLarge { estimated, limit });
        }
        Ok(())
    }
}

impl Generator for Gateway {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        self.preflight(request)?;
        let mut req = request.clone();
        req.max_output_tokens = req.max_output_tokens.min(self.budget.program_max);
        let started = Instant::now();
        let mut resp = self.backend.generate(&req)?;
        // Extra samples are dropped; a shortfall is passed on as-is.
        resp.candidates.truncate(req.sample_count as usize);
        resp.usage.output_tokens.truncate(req.sample_count as usize);
        if resp.latency_ms == 0 {
            resp.latency_ms = started.elapsed().as_millis() as u64;
        }
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_partition() {
        let b = TokenBudget::default();
        assert_eq!(b.context_total, 49_152);
        assert_eq!(b.program_max + b.input_plus_reasoning_max, b.context_total);
        assert_eq!(TokenBudget::new(49_152, 15_536, 33_616), Ok(b));
        assert!(TokenBudget::new(100, 60, 50).is_err());
    }

    #[test]
    fn budget_deserialization_validates() {
        let ok: TokenBudget =
            serde_json::from_str(r#"{"context_total":10,"program_max":4,"input_plus_reasoning_max":6}"#).unwrap();
        assert_eq!(ok.program_max, 4);
        assert!(serde_json::from_str::<TokenBudget>(
            r#"{"context_total":10,"program_max":4,"input_plus_reasoning_max":7}"#
        )
        .is_err());
    }

    #[test]
    fn heuristic_overestimates() {
        assert_eq!(CharHeuristic.count(""), 0);
        assert_eq!(CharHeuristic.count("abcd"), 2);
        assert_eq!(CharHeuristic.count(&"a".repeat(400)), 110);
    }

    #[test]
    fn oversized_prompt_is_refused_before_backend() {
        struct Panics;
        impl Generator for Panics {
            fn generate(&self, _: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
                panic!("backend must not be called");
            }
        }
        let gw = Gateway::new(
            Arc::new(Panics),
            TokenBudget::new(20, 10, 10).unwrap(),
            GenerationSettings::default(),
        );
        let req = gw.request("x".repeat(100), 1, RequestPurpose::Proposal, RequestOrigin::default());
        assert!(matches!(gw.generate(&req), Err(GatewayError::PromptTooLarge { limit: 10, .. })));
    }

    #[test]
    fn request_uses_settings() {
        let gw = Gateway::new(
            Arc::new(SyntheticGenerator::default()),
            TokenBudget::default(),
            GenerationSettings::default(),
        );
        let req = gw.request("p".into(), 16, RequestPurpose::Proposal, RequestOrigin::default());
        assert_eq!(req.temperature, 1.0);
        assert_eq!(req.max_output_tokens, 15_536);
        assert_eq!(req.reasoning_mode, "high");
        assert_eq!(gw.generate(&req).unwrap().candidates.len(), 16);
    }

    #[test]
    fn retryability() {
        assert!(GatewayError::Transport("reset".into()).is_retryable());
        assert!(GatewayError::Status { status: 503, body: String::new() }.is_retryable());
        assert!(!GatewayError::Status { status: 400, body: String::new() }.is_retryable());
        assert!(!GatewayError::PromptTooLarge { estimated: 2, limit: 1 }.is_retryable());
    }
}

//! Deterministic in-process evaluators for tests and dry runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::evaluator::Evaluator;
use super::outcome::{ErrorClass, EvalOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MockFallback {
    /// The trimmed solution text is the score; anything else is malformed.
    #[default]
    Parse,
    /// A score in `[0, 1)` derived from the SHA-256 of the solution.
    Hash,
    /// Unlisted solutions fail as invalid.
    Reject,
}

/// Script for [`MockEvaluator`], usually loaded from JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEvaluatorScript {
    /// Exact solution text to score.
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
    /// Exact solution text to a forced error class.
    #[serde(default)]
    pub errors: BTreeMap<String, ErrorClass>,
    #[serde(default)]
    pub fallback: MockFallback,
    /// Artificial latency per call.
    #[serde(default)]
    pub delay_ms: u64,
}

#[derive(Debug, Default)]
pub struct MockEvaluator {
    pub script: MockEvaluatorScript,
    calls: AtomicU64,
}

impl MockEvaluator {
    pub fn new(script: MockEvaluatorScript) -> Self {
        Self {
            script,
            calls: AtomicU64::new(0),
        }
    }

    pub fn from_path(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let script = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(script))
    }

    /// Number of `evaluate` calls so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Uniform value in `[0, 1)` from the first eight bytes of SHA-256.
pub fn hash_unit(text: &str) -> f64 {
    let digest = Sha256::digest(text.as_bytes());
    let bits = u64::from_be_bytes(digest[..8].try_into().unwrap());
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

impl Evaluator for MockEvaluator {
    fn evaluate(&self, solution: &str) -> EvalOutcome {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.script.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.script.delay_ms));
        }
        let key = solution.trim();
        if let Some(&class) = self.script.errors.get(key) {
            if class.is_failure() {
                return EvalOutcome::failed(class, format!("scripted {class}"));
            }
        }
        if let Some(&score) = self.script.scores.get(key) {
            return EvalOutcome::scored(score);
        }
        match self.script.fallback {
            MockFallback::Parse => match key.parse::<f64>() {
                Ok(v) if v.is_finite() => EvalOutcome::scored(v),
                _ => EvalOutcome::failed(
                    ErrorClass::MalformedOutput,
                    format!("expected SCORE line, got {:?}", truncate(key)),
                ),
            },
            MockFallback::Hash => EvalOutcome::scored(hash_unit(solution)),
            MockFallback::Reject => EvalOutcome::failed(ErrorClass::InvalidSolution, "INVALID unscripted"),
        }
    }

    fn describe(&self) -> String {
        "mock evaluator".into()
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(40).collect()
}

/// Adapts a closure into an [`Evaluator`].
pub struct FnEvaluator<F>(pub F);

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&str) -> EvalOutcome + Send + Sync,
{
    fn evaluate(&self, solution: &str) -> EvalOutcome {
        (self.0)(solution)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_entries_win_over_fallback() {
        let mut script = MockEvaluatorScript::default();
        script.scores.insert("a".into(), 0.7);
        script.errors.insert("b".into(), ErrorClass::Timeout);
        let ev = MockEvaluator::new(script);
        assert_eq!(ev.evaluate("a").score(), 0.7);
        assert_eq!(ev.evaluate("b").error_class, ErrorClass::Timeout);
        assert_eq!(ev.evaluate(" 0.25 \n").score(), 0.25);
        assert_eq!(ev.evaluate("zzz").error_class, ErrorClass::MalformedOutput);
        assert_eq!(ev.calls(), 4);
    }

    #[test]
    fn hash_fallback_is_stable() {
        let ev = MockEvaluator::new(MockEvaluatorScript {
            fallback: MockFallback::Hash,
            ..Default::default()
        });
        let a = ev.evaluate("hello").score();
        assert_eq!(a, ev.evaluate("hello").score());
        assert!((0.0..1.0).contains(&a));
    }
}

use serde::{Deserialize, Serialize};

use crate::model::FAILURE_SCORE;

/// Why an evaluation did not produce a trusted score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    #[default]
    None,
    Timeout,
    Crash,
    MalformedOutput,
    MissingDependency,
    InvalidSolution,
    VerificationMismatch,
}

impl ErrorClass {
    pub fn is_failure(self) -> bool {
        self != ErrorClass::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::None => "none",
            ErrorClass::Timeout => "timeout",
            ErrorClass::Crash => "crash",
            ErrorClass::MalformedOutput => "malformed_output",
            ErrorClass::MissingDependency => "missing_dependency",
            ErrorClass::InvalidSolution => "invalid_solution",
            ErrorClass::VerificationMismatch => "verification_mismatch",
        }
    }
}

impl std::fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    /// No verifier is configured; the reported score stands.
    #[default]
    Unverified,
    /// An independent recomputation agreed with the reported score.
    Accepted,
    /// The recomputation disagreed, or the verifier itself failed.
    Rejected,
    /// The primary evaluation failed, so nothing was verified.
    Skipped,
}

/// Result of evaluating one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub reported_score: Option<f64>,
    pub verified_score: Option<f64>,
    pub error_class: ErrorClass,
    #[serde(default)]
    pub verification: Verification,
    #[serde(default)]
    pub stderr_excerpt: String,
    #[serde(default)]
    pub wall_time_s: f64,
}

impl EvalOutcome {
    pub fn scored(score: f64) -> Self {
        debug_assert!(score.is_finite());
        Self {
            reported_score: Some(score),
            verified_score: None,
            error_class: ErrorClass::None,
            verification: Verification::Unverified,
            stderr_excerpt: String::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn failed(class: ErrorClass, message: impl Into<String>) -> Self {
        debug_assert!(class.is_failure());
        Self {
            reported_score: None,
            verified_score: None,
            error_class: class,
            verification: Verification::Skipped,
            stderr_excerpt: message.into(),
            wall_time_s: 0.0,
        }
    }

    pub fn is_failure(&self) -> bool {
        self.error_class.is_failure()
    }

    /// The score the search acts on. Failures map to [`FAILURE_SCORE`]; a
    /// verified score always wins over the one the candidate reported.
    pub fn score(&self) -> f64 {
        if self.is_failure() {
            return FAILURE_SCORE;
        }
        match (self.verified_score, self.reported_score) {
            (Some(v), _) if v.is_finite() => v,
            (None, Some(r)) if r.is_finite() => r,
            _ => FAILURE_SCORE,
        }
    }

    /// Flips the sign of every score, for metrics where smaller is better.
    pub fn negated(mut self) -> Self {
        self.reported_score = self.reported_score.map(|s| -s);
        self.verified_score = self.verified_score.map(|s| -s);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_scores_sentinel() {
        let o = EvalOutcome::failed(ErrorClass::Timeout, "slow");
        assert_eq!(o.score(), FAILURE_SCORE);
        assert!(o.is_failure());
    }

    #[test]
    fn verified_score_is_canonical() {
        let mut o = EvalOutcome::scored(0.9);
        o.verified_score = Some(0.5);
        o.verification = Verification::Accepted;
        assert_eq!(o.score(), 0.5);
    }

    #[test]
    fn error_class_wire_names() {
        let s = serde_json::to_string(&ErrorClass::VerificationMismatch).unwrap();
        assert_eq!(s, "\"verification_mismatch\"");
        assert_eq!(ErrorClass::MalformedOutput.to_string(), "malformed_output");
    }
}

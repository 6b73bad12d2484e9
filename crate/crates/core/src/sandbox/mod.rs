//! Sandboxed evaluation of untrusted candidates.
//!
//! Every candidate runs as a fresh child process group with a timeout and a
//! memory cap. Scores can be recomputed by an independent verifier, and every
//! run ends in exactly one [`ErrorClass`].

pub mod evaluator;
pub mod mock;
pub mod outcome;
pub mod process;
pub mod signals;

pub use evaluator::{
    classify, evaluate, parse_score_line, verify, Evaluator, EvaluatorSpec, Isolation, Network,
    SandboxEvaluator, Tolerance, VerifierSpec, SOLUTION_PLACEHOLDER,
};
pub use mock::{hash_unit, FnEvaluator, MockEvaluator, MockEvaluatorScript, MockFallback};
pub use outcome::{ErrorClass, EvalOutcome, Verification};
pub use process::{group_members, kill_all_groups, run_isolated, ExitKind, ProcessLimits, ProcessReport};
pub use signals::{
    accumulate_failure_patterns, dominant_class, failure_signature, normalize_line, reflection_prompt,
    truncate_chars, LocalMemory, DEFAULT_PATTERN_COUNT, DEFAULT_REFLECTION_CAP, REFLECTION_PROMPT,
};

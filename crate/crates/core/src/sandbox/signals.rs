//! Per-trajectory memory: frequent failure signatures and winner reflections.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::outcome::{ErrorClass, EvalOutcome};

pub const DEFAULT_PATTERN_COUNT: usize = 3;
pub const DEFAULT_REFLECTION_CAP: usize = 512;

/// Fixed prompt sent to the generator when reflecting on a committed winner.
pub const REFLECTION_PROMPT: &str = "Summarize, in a few sentences, the approach taken by the \
solution below and the insights that made it score well. Do not include code.";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalMemory {
    /// Rendered signatures, most frequent first.
    pub failure_patterns: Vec<String>,
    /// Occurrence counts for every signature seen so far in the trajectory.
    #[serde(default)]
    pub signature_counts: BTreeMap<String, u64>,
    #[serde(default)]
    pub reflections: Vec<String>,
    /// Opaque warm-start text supplied by the task.
    #[serde(default)]
    pub artifacts: Option<String>,
}

fn patterns() -> &'static [(Regex, &'static str)] {
    static RE: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    RE.get_or_init(|| {
        vec![
            (
                Regex::new(r"(/tmp|/var/tmp|/private/var/folders)/[^\s:'\x22,)]*").unwrap(),
                "<tmp>",
            ),
            (Regex::new(r"evalscale-[A-Za-z0-9]+").unwrap(), "<tmp>"),
            (Regex::new(r"0x[0-9a-fA-F]+").unwrap(), "<addr>"),
            (Regex::new(r"\bpid \d+").unwrap(), "pid <n>"),
            (Regex::new(r"\d+(\.\d+)?s\b").unwrap(), "<t>s"),
            (Regex::new(r"[ \t]+").unwrap(), " "),
        ]
    })
}

/// Removes run-specific noise (temp paths, addresses, timings) from a line.
pub fn normalize_line(line: &str) -> String {
    let mut s = line.trim().to_string();
    for (re, rep) in patterns() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s.trim().to_string()
}

/// `class: first non-empty line of the excerpt`, normalized.
pub fn failure_signature(outcome: &EvalOutcome) -> Option<String> {
    if !outcome.is_failure() {
        return None;
    }
    let first = outcome
        .stderr_excerpt
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(normalize_line)
        .unwrap_or_default();
    Some(if first.is_empty() {
        outcome.error_class.to_string()
    } else {
        format!("{}: {}", outcome.error_class, first)
    })
}

/// Folds a window of outcomes into the memory and keeps the `top_k` most
/// frequent signatures. Ties go to the lexicographically smaller signature.
pub fn accumulate_failure_patterns(
    memory: &LocalMemory,
    window: &[EvalOutcome],
    top_k: usize,
) -> LocalMemory {
    let mut next = memory.clone();
    let mut changed = false;
    for sig in window.iter().filter_map(failure_signature) {
        *next.signature_counts.entry(sig).or_insert(0) += 1;
        changed = true;
    }
    if !changed {
        return next;
    }
    let mut ranked: Vec<(&String, &u64)> = next.signature_counts.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    next.failure_patterns = ranked.into_iter().take(top_k).map(|(s, _)| s.clone()).collect();
    next
}

/// Cuts `text` to at most `cap` characters.
pub fn truncate_chars(text: &str, cap: usize) -> String {
    match text.char_indices().nth(cap) {
        Some((i, _)) => text[..i].to_string(),
        None => text.to_string(),
    }
}

/// Prompt for reflecting on a committed solution.
pub fn reflection_prompt(solution: &str, score: f64) -> String {
    format!("{REFLECTION_PROMPT}\n\nScore: {score}\n\nSolution:\n{solution}\n")
}

/// Dominant error class of a window, used for degenerate commits.
pub fn dominant_class(window: &[EvalOutcome]) -> Option<ErrorClass> {
    let mut counts: BTreeMap<ErrorClass, usize> = BTreeMap::new();
    for o in window.iter().filter(|o| o.is_failure()) {
        *counts.entry(o.error_class).or_insert(0) += 1;
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fail(class: ErrorClass, msg: &str) -> EvalOutcome {
        EvalOutcome::failed(class, msg)
    }

    #[test]
    fn top_one_keeps_the_most_frequent_class() {
        let mut window = vec![fail(ErrorClass::Timeout, ""); 10];
        window.extend(vec![fail(ErrorClass::Crash, "segfault"); 2]);
        let m = accumulate_failure_patterns(&LocalMemory::default(), &window, 1);
        assert_eq!(m.failure_patterns, vec!["timeout".to_string()]);
    }

    #[test]
    fn temp_paths_collapse_to_one_signature() {
        let window = vec![
            fail(ErrorClass::Crash, "Traceback in /tmp/evalscale-a1B2c3/solution.py line 3"),
            fail(ErrorClass::Crash, "Traceback in /tmp/evalscale-Zz9/solution.py line 3"),
            fail(ErrorClass::Crash, "Traceback in /tmp/.tmpQ81x/solution.py line 3"),
        ];
        let m = accumulate_failure_patterns(&LocalMemory::default(), &window, 3);
        assert_eq!(m.failure_patterns.len(), 1);
        assert_eq!(m.failure_patterns[0], "crash: Traceback in <tmp> line 3");
        assert_eq!(m.signature_counts.values().sum::<u64>(), 3);
    }

    #[test]
    fn empty_window_leaves_memory_unchanged() {
        let mut mem = LocalMemory::default();
        mem.failure_patterns.push("crash: x".into());
        mem.signature_counts.insert("crash: x".into(), 4);
        assert_eq!(accumulate_failure_patterns(&mem, &[], 3), mem);
        let ok = vec![EvalOutcome::scored(1.0)];
        assert_eq!(accumulate_failure_patterns(&mem, &ok, 3), mem);
    }

    #[test]
    fn addresses_are_normalized() {
        assert_eq!(
            normalize_line("segfault at 0x7ffe12ab in   worker"),
            "segfault at <addr> in worker"
        );
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        assert_eq!(truncate_chars("héllo", 2), "hé");
        assert_eq!(truncate_chars("abc", 10), "abc");
        assert_eq!(truncate_chars(&"x".repeat(600), 512).len(), 512);
    }
}

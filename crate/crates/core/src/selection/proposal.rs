//! Proposal bundles and their text rendering.
//!
//! A rendered prompt has four fixed sections:
//!
//! ```text
//! === INSTRUCTION ===
//! === EVALUATION ===
//! === PRIOR ATTEMPTS ===
//! === SIGNALS ===
//! ```
//!
//! Each prior attempt starts with a header line
//! `--- attempt <i> | node <id> | score <r> | status <class> | chars <n> ---`
//! followed by exactly `n` characters of solution text, a newline, and
//! optional `feedback:` and `reflection:` lines. The char count makes the
//! format parseable whatever the solution contains.

use serde::{Deserialize, Serialize};

use crate::gateway::{BLOCK_END, BLOCK_START};
use crate::model::{Node, NodeId, TaskSpec};
use crate::sandbox::{ErrorClass, LocalMemory};

pub const SECTION_INSTRUCTION: &str = "=== INSTRUCTION ===";
pub const SECTION_EVALUATION: &str = "=== EVALUATION ===";
pub const SECTION_ATTEMPTS: &str = "=== PRIOR ATTEMPTS ===";
pub const SECTION_SIGNALS: &str = "=== SIGNALS ===";

const FEEDBACK_CHARS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspirationEntry {
    pub node_id: NodeId,
    pub solution: String,
    pub score: f64,
    pub error_class: ErrorClass,
    /// One-line evaluator feedback.
    pub feedback: String,
    pub reflection: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Signals {
    pub failure_patterns: Vec<String>,
    pub artifacts: Option<String>,
    /// Text overview of the elite pool, when that policy is active.
    pub pool_overview: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalBundle {
    pub instruction: String,
    pub eval_config_summary: String,
    pub inspirations: Vec<InspirationEntry>,
    pub accumulated_signals: Signals,
}

fn one_line(text: &str, cap: usize) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    flat.chars().take(cap).collect()
}

/// Assembles a bundle. `inspirations` are shown in the given order.
pub fn build_proposal(
    task: &TaskSpec,
    inspirations: &[&Node],
    memory: &LocalMemory,
    eval_summary: &str,
    pool_overview: Option<String>,
) -> ProposalBundle {
    let mut summary = String::new();
    if !eval_summary.is_empty() {
        summary.push_str(eval_summary);
        summary.push('\n');
    }
    summary.push_str("Scores are oriented so that higher is better.\n");
    if task.solution_markers {
        summary.push_str(&format!(
            "Return the complete solution between {BLOCK_START} and {BLOCK_END} markers."
        ));
    } else {
        summary.push_str("Return the complete solution and nothing else.");
    }
    ProposalBundle {
        instruction: task.instruction.trim_end().to_string(),
        eval_config_summary: summary,
        inspirations: inspirations
            .iter()
            .map(|n| InspirationEntry {
                node_id: n.node_id,
                solution: n.solution.clone(),
                score: n.score,
                error_class: n.metadata.error_class,
                feedback: one_line(&n.metadata.feedback, FEEDBACK_CHARS),
                reflection: n.reflection.as_deref().map(|r| one_line(r, usize::MAX)),
            })
            .collect(),
        accumulated_signals: Signals {
            failure_patterns: memory.failure_patterns.clone(),
            artifacts: memory.artifacts.clone().or_else(|| task.artifacts.clone()),
            pool_overview,
        },
    }
}

/// Deterministic prompt text for a bundle.
pub fn render(bundle: &ProposalBundle) -> String {
    let mut out = String::new();
    out.push_str(SECTION_INSTRUCTION);
    out.push('\n');
    out.push_str(&bundle.instruction);
    out.push_str("\n\n");
    out.push_str(SECTION_EVALUATION);
    out.push('\n');
    out.push_str(&bundle.eval_config_summary);
    out.push_str("\n\n");
    out.push_str(SECTION_ATTEMPTS);
    out.push('\n');
    if bundle.inspirations.is_empty() {
        out.push_str("(none)\n");
    }
    for (i, e) in bundle.inspirations.iter().enumerate() {
        let score = if e.error_class.is_failure() {
            "failed".to_string()
        } else {
            format!("{}", e.score)
        };
        out.push_str(&format!(
            "--- attempt {} | node {} | score {} | status {} | chars {} ---\n",
            i + 1,
            e.node_id,
            score,
            e.error_class,
            e.solution.chars().count()
        ));
        out.push_str(&e.solution);
        out.push('\n');
        if !e.feedback.is_empty() {
            out.push_str(&format!("feedback: {}\n", e.feedback));
        }
        if let Some(r) = &e.reflection {
            out.push_str(&format!("reflection: {r}\n"));
        }
    }
    out.push('\n');
    out.push_str(SECTION_SIGNALS);
    out.push('\n');
    let s = &bundle.accumulated_signals;
    if s.failure_patterns.is_empty() && s.artifacts.is_none() && s.pool_overview.is_none() {
        out.push_str("(none)\n");
    }
    if !s.failure_patterns.is_empty() {
        out.push_str("Frequent failures:\n");
        for p in &s.failure_patterns {
            out.push_str(&format!("- {}\n", one_line(p, usize::MAX)));
        }
    }
    if let Some(pool) = &s.pool_overview {
        out.push_str("Elite pool:\n");
        for line in pool.lines() {
            out.push_str(&format!("- {line}\n"));
        }
    }
    if let Some(a) = &s.artifacts {
        out.push_str("Warm start:\n");
        out.push_str(a.trim_end());
        out.push('\n');
    }
    out
}

/// An attempt as recovered from rendered text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAttempt {
    pub node_id: NodeId,
    /// `None` for failed attempts.
    pub score: Option<f64>,
    pub status: String,
    pub solution: String,
    pub feedback: Option<String>,
    pub reflection: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedProposal {
    pub instruction: String,
    pub evaluation: String,
    pub attempts: Vec<ParsedAttempt>,
    pub failure_patterns: Vec<String>,
    /// The section headers in the order they appeared.
    pub section_order: Vec<String>,
}

fn take_line<'a>(rest: &mut &'a str) -> Option<&'a str> {
    if rest.is_empty() {
        return None;
    }
    let (line, tail) = match rest.find('\n') {
        Some(i) => (&rest[..i], &rest[i + 1..]),
        None => (*rest, ""),
    };
    *rest = tail;
    Some(line)
}

/// Parses text produced by [`render`].
pub fn parse_rendered(text: &str) -> Result<ParsedProposal, String> {
    let mut rest = text;
    let mut section_order = Vec::new();
    let mut expect = |rest: &mut &str, header: &str| -> Result<(), String> {
        match take_line(rest) {
            Some(l) if l == header => {
                section_order.push(header.to_string());
                Ok(())
            }
            other => Err(format!("expected {header}, found {other:?}")),
        }
    };

    let read_until = |rest: &mut &str, header: &str| -> Result<String, String> {
        let marker = format!("\n\n{header}\n");
        let i = rest.find(&marker).ok_or_else(|| format!("missing {header}"))?;
        let body = rest[..i].to_string();
        *rest = &rest[i + 2..];
        Ok(body)
    };

    expect(&mut rest, SECTION_INSTRUCTION)?;
    let instruction = read_until(&mut rest, SECTION_EVALUATION)?;
    expect(&mut rest, SECTION_EVALUATION)?;
    let evaluation = read_until(&mut rest, SECTION_ATTEMPTS)?;
    expect(&mut rest, SECTION_ATTEMPTS)?;

    let mut attempts = Vec::new();
    loop {
        if let Some(tail) = rest.strip_prefix("(none)\n") {
            rest = tail;
            continue;
        }
        if let Some(tail) = rest.strip_prefix('\n') {
            rest = tail;
            break;
        }
        let header = take_line(&mut rest).ok_or("unterminated attempts section")?;
        let inner = header
            .strip_prefix("--- ")
            .and_then(|h| h.strip_suffix(" ---"))
            .ok_or_else(|| format!("bad attempt header {header:?}"))?;
        let fields: Vec<&str> = inner.split(" | ").collect();
        let get = |i: usize, key: &str| -> Result<&str, String> {
            fields
                .get(i)
                .and_then(|f| f.strip_prefix(key))
                .map(str::trim)
                .ok_or_else(|| format!("missing {key} in {header:?}"))
        };
        let node_id = NodeId(get(1, "node ")?.parse().map_err(|e| format!("node id: {e}"))?);
        let score_text = get(2, "score ")?;
        let score = if score_text == "failed" {
            None
        } else {
            Some(score_text.parse().map_err(|e| format!("score: {e}"))?)
        };
        let status = get(3, "status ")?.to_string();
        let chars: usize = get(4, "chars ")?.parse().map_err(|e| format!("chars: {e}"))?;
        let end = rest
            .char_indices()
            .nth(chars)
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        let solution = rest[..end].to_string();
        if solution.chars().count() != chars {
            return Err("solution shorter than declared".into());
        }
        rest = rest[end..].strip_prefix('\n').ok_or("missing newline after solution")?;
        let mut feedback = None;
        let mut reflection = None;
        if let Some(tail) = rest.strip_prefix("feedback: ") {
            rest = tail;
            feedback = take_line(&mut rest).map(str::to_string);
        }
        if let Some(tail) = rest.strip_prefix("reflection: ") {
            rest = tail;
            reflection = take_line(&mut rest).map(str::to_string);
        }
        attempts.push(ParsedAttempt {
            node_id,
            score,
            status,
            solution,
            feedback,
            reflection,
        });
    }

    expect(&mut rest, SECTION_SIGNALS)?;
    let mut failure_patterns = Vec::new();
    let mut in_failures = false;
    while let Some(line) = take_line(&mut rest) {
        if line == "Frequent failures:" {
            in_failures = true;
        } else if let (true, Some(p)) = (in_failures, line.strip_prefix("- ")) {
            failure_patterns.push(p.to_string());
        } else {
            in_failures = false;
        }
    }

    Ok(ParsedProposal {
        instruction,
        evaluation,
        attempts,
        failure_patterns,
        section_order,
    })
}

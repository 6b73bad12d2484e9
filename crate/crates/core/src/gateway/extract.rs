use thiserror::Error;

pub const BLOCK_START: &str = "EVOLVE-BLOCK-START";
pub const BLOCK_END: &str = "EVOLVE-BLOCK-END";

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no {BLOCK_START} marker")]
    Missing,
    #[error("{BLOCK_END} appears before any {BLOCK_START}")]
    EndBeforeStart,
    #[error("second {BLOCK_START} before {BLOCK_END}")]
    Nested,
    #[error("{BLOCK_START} is never closed")]
    Unterminated,
}

/// Pulls the solution out of a candidate.
///
/// Without markers the whole text is the solution. With markers, the region
/// between the first start marker and the end marker that follows it is
/// returned; the rest of the marker lines (comment prefixes and the like)
/// is not part of the region.
pub fn extract_solution(text: &str, markers: bool) -> Result<String, ExtractError> {
    if !markers {
        return Ok(text.to_string());
    }
    let start = text.find(BLOCK_START);
    let end = text.find(BLOCK_END);
    let s = match (start, end) {
        (None, None) => return Err(ExtractError::Missing),
        (None, Some(_)) => return Err(ExtractError::EndBeforeStart),
        (Some(s), Some(e)) if e < s => return Err(ExtractError::EndBeforeStart),
        (Some(s), _) => s,
    };
    let body_from = s + BLOCK_START.len();
    let rest = &text[body_from..];
    let Some(e) = rest.find(BLOCK_END) else {
        return Err(ExtractError::Unterminated);
    };
    if rest[..e].contains(BLOCK_START) {
        return Err(ExtractError::Nested);
    }
    let mut inner = &rest[..e];
    if let Some(i) = inner.find('\n') {
        if inner[..i].trim().is_empty() {
            inner = &inner[i + 1..];
        }
    }
    if let Some(i) = inner.rfind('\n') {
        inner = &inner[..=i];
    }
    Ok(inner.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_region_of_one_pair() {
        let text = "header\n# EVOLVE-BLOCK-START\nx = 1\ny = 2\n# EVOLVE-BLOCK-END\nfooter\n";
        assert_eq!(extract_solution(text, true).unwrap(), "x = 1\ny = 2\n");
    }

    #[test]
    fn markers_optional() {
        assert_eq!(extract_solution("anything", false).unwrap(), "anything");
        assert_eq!(extract_solution("anything", true), Err(ExtractError::Missing));
    }

    #[test]
    fn malformed_marker_orders() {
        let s = BLOCK_START;
        let e = BLOCK_END;
        assert_eq!(extract_solution(&format!("{s}\na\n{s}\nb\n{e}"), true), Err(ExtractError::Nested));
        assert_eq!(extract_solution(&format!("{e}\na\n{s}\nb\n"), true), Err(ExtractError::EndBeforeStart));
        assert_eq!(extract_solution(&format!("{s}\nabc"), true), Err(ExtractError::Unterminated));
        assert_eq!(extract_solution(&format!("{s}inline{e}"), true).unwrap(), "inline");
    }
}

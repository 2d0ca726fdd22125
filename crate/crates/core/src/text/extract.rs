//! Pulling PDDL out of free-form model responses.

use super::sexpr::{Pos, SourceError};

/// A fenced code block: the info string after the opening fence and the body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fence<'a> {
    pub label: &'a str,
    pub body: String,
}

/// All ``` fenced blocks in order. An unterminated fence runs to the end.
pub fn fenced_blocks(response: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut lines = response.lines();
    while let Some(line) = lines.next() {
        let Some(label) = line.trim_start().strip_prefix("```") else {
            continue;
        };
        let mut body = Vec::new();
        for inner in lines.by_ref() {
            if inner.trim_start().starts_with("```") {
                break;
            }
            body.push(inner.trim_end_matches('\r'));
        }
        out.push(Fence {
            label: label.trim(),
            body: body.join("\n"),
        });
    }
    out
}

fn find_form_start(text: &str) -> Option<usize> {
    let lower = text.to_lowercase();
    [lower.find("(define"), lower.find("(:action")]
        .into_iter()
        .flatten()
        .min()
}

/// The balanced S-expression starting at `start`, or the rest of the text
/// when it never closes (so the parser can report the imbalance).
fn balanced_from(text: &str, start: usize) -> &str {
    let mut depth = 0usize;
    let mut in_comment = false;
    for (i, c) in text[start..].char_indices() {
        match c {
            '\n' => in_comment = false,
            ';' => in_comment = true,
            '(' if !in_comment => depth += 1,
            ')' if !in_comment => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return &text[start..start + i + 1];
                }
            }
            _ => {}
        }
    }
    &text[start..]
}

/// First fenced block holding a `(define` or `(:action` form; failing
/// that, the first such balanced form in the raw text.
pub fn extract_pddl_block(response: &str) -> Result<String, SourceError> {
    for fence in fenced_blocks(response) {
        if find_form_start(&fence.body).is_some() {
            return Ok(fence.body.trim().to_string());
        }
    }
    if let Some(start) = find_form_start(response) {
        return Ok(balanced_from(response, start).trim().to_string());
    }
    Err(SourceError::new(
        Pos::START,
        "no PDDL block in response",
        response
            .lines()
            .next()
            .unwrap_or("")
            .chars()
            .take(40)
            .collect::<String>(),
    ))
}

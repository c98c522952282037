//! Document-to-triples extraction prompt and response parsing.

use super::templates::{
    EXTRACTION_EXAMPLE_INPUT, EXTRACTION_EXAMPLE_OUTPUT, EXTRACTION_INSTRUCTION,
};
use super::{PromptError, Result};

/// The extraction instruction, its one-shot example, then the document.
/// Any literal "Output:" inside the document is escaped so the final anchor
/// stays unique.
pub fn build_extraction_prompt(document: &str) -> Result<String> {
    if document.trim().is_empty() {
        return Err(PromptError::EmptyDocument);
    }
    let safe = document.replace("Output:", "Output\\:");
    Ok(format!(
        "{EXTRACTION_INSTRUCTION}\n\nExample\nInput: {EXTRACTION_EXAMPLE_INPUT}\nOutput: {EXTRACTION_EXAMPLE_OUTPUT}\n\nInput: {safe}\nOutput:"
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionParse {
    pub tuples: Vec<(String, String, String)>,
    /// Fragments that did not parse as (source, relation, target).
    pub skipped: usize,
}

/// Parse semicolon-separated "(a, b, c)" tuples, trimming whitespace and
/// skipping malformed fragments.
pub fn parse_extraction(text: &str) -> Result<ExtractionParse> {
    let mut tuples = Vec::new();
    let mut skipped = 0usize;
    for fragment in text.split(';') {
        let fragment = fragment.trim();
        if fragment.is_empty() {
            continue;
        }
        let Some(inner) = fragment
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
        else {
            skipped += 1;
            continue;
        };
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 3 || parts.iter().any(|p| p.is_empty()) {
            skipped += 1;
            continue;
        }
        tuples.push((
            parts[0].to_string(),
            parts[1].to_string(),
            parts[2].to_string(),
        ));
    }
    if tuples.is_empty() {
        return Err(PromptError::NoTuples);
    }
    Ok(ExtractionParse { tuples, skipped })
}

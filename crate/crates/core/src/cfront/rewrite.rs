//! Span-based source rewriting over a token list.

use super::ast::Span;
use super::lexer::Token;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("overlapping edits at tokens {first:?} and {second:?}")]
pub struct OverlapError {
    pub first: Span,
    pub second: Span,
}

/// Collects non-overlapping token-span replacements and produces new text.
pub struct Rewriter<'t> {
    tokens: &'t [Token],
    edits: Vec<(Span, String)>,
}

impl<'t> Rewriter<'t> {
    pub fn new(tokens: &'t [Token]) -> Self {
        Rewriter { tokens, edits: Vec::new() }
    }

    pub fn replace(&mut self, span: Span, text: impl Into<String>) {
        self.edits.push((span, text.into()));
    }

    pub fn insert_before(&mut self, token: usize, text: impl Into<String>) {
        self.edits.push((token..token, text.into()));
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn finish(mut self) -> Result<String, OverlapError> {
        // Stable sort keeps insertion order for edits at the same position.
        self.edits.sort_by_key(|(s, _)| (s.start, s.end));
        for w in self.edits.windows(2) {
            let (a, b) = (&w[0].0, &w[1].0);
            if b.start < a.end || (a.start == b.start && !a.is_empty() && !b.is_empty()) {
                return Err(OverlapError { first: a.clone(), second: b.clone() });
            }
        }
        let mut out = String::new();
        let mut pos = 0;
        for (span, text) in &self.edits {
            for t in &self.tokens[pos..span.start] {
                out.push_str(&t.text);
            }
            out.push_str(text);
            pos = pos.max(span.end);
        }
        for t in &self.tokens[pos..] {
            out.push_str(&t.text);
        }
        Ok(out)
    }
}

/// Text of `range` with `edits` (absolute, non-overlapping spans inside the
/// range) applied.
pub fn render_range(tokens: &[Token], range: Span, mut edits: Vec<(Span, String)>) -> String {
    edits.sort_by_key(|(s, _)| (s.start, s.end));
    let mut out = String::new();
    let mut pos = range.start;
    for (span, text) in edits {
        for t in &tokens[pos..span.start.max(pos)] {
            out.push_str(&t.text);
        }
        out.push_str(&text);
        pos = pos.max(span.end);
    }
    for t in &tokens[pos..range.end] {
        out.push_str(&t.text);
    }
    out
}

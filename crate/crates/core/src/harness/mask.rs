//! Truncating a reference body to a completion prompt.

use std::collections::HashSet;

use thiserror::Error;

use crate::obfuscate::ParsedFunction;

pub const DEFAULT_KEEP_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("body has {statements} top-level statements; at least 2 are needed")]
    TooShort { statements: usize },
    #[error("keep ratio {0} is outside [0, 1)")]
    InvalidRatio(f64),
    #[error("cannot parse reference body: {0}")]
    Parse(String),
    #[error("cannot keep {keep} of {statements} statements")]
    TooMany { keep: usize, statements: usize },
}

/// Number of top-level statements in a function definition's body.
pub fn top_level_statements(text: &str, typedefs: &HashSet<String>) -> Result<usize, MaskError> {
    let f = ParsedFunction::parse(text, typedefs).map_err(|e| MaskError::Parse(e.to_string()))?;
    Ok(f.def().body.compound_items().map_or(0, <[_]>::len))
}

/// The definition text up to the end of its `keep`-th top-level statement,
/// with the body left open.
pub fn mask_with_count(text: &str, typedefs: &HashSet<String>, keep: usize) -> Result<String, MaskError> {
    let f = ParsedFunction::parse(text, typedefs).map_err(|e| MaskError::Parse(e.to_string()))?;
    let body = &f.def().body;
    let items = body.compound_items().unwrap_or(&[]);
    if keep > items.len() {
        return Err(MaskError::TooMany { keep, statements: items.len() });
    }
    let end = if keep == 0 { body.span.start + 1 } else { items[keep - 1].span.end };
    let mut out = f.unit.text(&(0..end));
    out.push('\n');
    Ok(out)
}

/// Keep the first ⌈keep_ratio × S⌉ of the S top-level statements, but never
/// all of them.
pub fn mask_for_completion(text: &str, typedefs: &HashSet<String>, keep_ratio: f64) -> Result<String, MaskError> {
    if !(0.0..1.0).contains(&keep_ratio) {
        return Err(MaskError::InvalidRatio(keep_ratio));
    }
    let statements = top_level_statements(text, typedefs)?;
    if statements < 2 {
        return Err(MaskError::TooShort { statements });
    }
    let keep = ((keep_ratio * statements as f64).ceil() as usize).min(statements - 1);
    mask_with_count(text, typedefs, keep)
}

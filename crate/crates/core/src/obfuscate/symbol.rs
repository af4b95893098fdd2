//! Symbol obfuscation of benchmark cases.

use std::collections::BTreeSet;

use super::rename::{make_rename_map, rename_source, rename_words, RenameMap};
use super::ObfuscateError;
use crate::cfront::lexer::{is_keyword, lex, TokenKind, KEYWORDS};
use crate::cfront::parser::BUILTIN_TYPEDEFS;
use crate::cfront::symbols::Resolution;
use crate::cfront::Project;
use crate::corpus::{BenchmarkCase, DepKind, ObfuscationRecord, Strategy};

/// Project-wide facts needed to rename a case safely.
#[derive(Debug, Clone)]
pub struct SymbolEnv {
    /// Names that must keep their spelling: externals, names used by test
    /// files, names occurring in unparsed regions, and `main`.
    pub exclusions: BTreeSet<String>,
    /// Every identifier spelled anywhere in the project.
    pub reserved: BTreeSet<String>,
    pub wordlist: Vec<String>,
}

impl SymbolEnv {
    pub fn from_project(project: &Project, wordlist: Vec<String>) -> SymbolEnv {
        let mut exclusions: BTreeSet<String> = ["main".to_string()].into();
        exclusions.extend(BUILTIN_TYPEDEFS.iter().map(|s| s.to_string()));
        let mut reserved: BTreeSet<String> = KEYWORDS.iter().map(|s| s.to_string()).collect();
        for (i, f) in project.files.iter().enumerate() {
            let st = project.symbols(i);
            let tokens = &f.unit.tokens;
            exclusions.extend(st.external_names(tokens));
            for (k, t) in tokens.iter().enumerate() {
                if t.kind != TokenKind::Identifier {
                    continue;
                }
                reserved.insert(t.text.clone());
                match st.resolution(k) {
                    None => {
                        exclusions.insert(t.text.clone());
                    }
                    Some(Resolution::Symbol { frame, .. }) if f.is_test && frame == 0 => {
                        exclusions.insert(t.text.clone());
                    }
                    _ => {}
                }
            }
            for d in &st.directive_idents {
                reserved.insert(d.name.clone());
                if f.is_test && d.resolution != Resolution::MacroParam {
                    exclusions.insert(d.name.clone());
                }
            }
        }
        SymbolEnv { exclusions, reserved, wordlist }
    }
}

/// Identifier spellings in a piece of C text, including inside `#define`/`#if` lines.
pub fn identifiers_in_text(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let Ok(tokens) = lex(text) else { return out };
    for t in tokens {
        match t.kind {
            TokenKind::Identifier => {
                out.insert(t.text);
            }
            TokenKind::PreprocessorDirective => {
                if let Some(h) = t.text.find('#') {
                    if let Ok(sub) = lex(&t.text[h + 1..]) {
                        let directive = sub.iter().find(|s| !s.is_trivia()).map(|s| s.text.clone()).unwrap_or_default();
                        if directive != "include" {
                            out.extend(sub.into_iter().skip(1).filter(|s| s.kind == TokenKind::Identifier).map(|s| s.text));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Rename every renamable identifier of the case (target, signature, partial
/// body, all context dependencies) with one map, drop comments, and rewrite
/// whole-word occurrences in the description.
pub fn apply_symbol_obfuscation(case: &BenchmarkCase, seed: u64, env: &SymbolEnv) -> Result<BenchmarkCase, ObfuscateError> {
    let mut identifiers = identifiers_in_text(&case.reference_body);
    identifiers.extend(identifiers_in_text(&case.signature));
    if let Some(p) = &case.partial_body {
        identifiers.extend(identifiers_in_text(p));
    }
    for d in case.context.deps.iter().filter(|d| d.kind != DepKind::Comment) {
        identifiers.extend(identifiers_in_text(&d.text));
    }
    identifiers.retain(|n| !is_keyword(n));
    let relevant_exclusions: BTreeSet<String> = identifiers.intersection(&env.exclusions).cloned().collect();
    // Collisions are checked against the whole project, not only this case.
    let mut blocked = env.reserved.clone();
    blocked.extend(env.exclusions.iter().cloned());
    let renamable: BTreeSet<String> = identifiers.difference(&env.exclusions).cloned().collect();
    let reserved_only: BTreeSet<String> = blocked.difference(&renamable).cloned().collect();
    let mut map = make_rename_map(&renamable, seed, &reserved_only, &env.wordlist)?;
    map.exclusions = relevant_exclusions;
    Ok(apply_rename_map(case, &map, seed)?)
}

// Identifiers that double as English words. In a description they are only
// renamed when the target itself declares or uses them.
const PROSE_WORDS: &[&str] = &[
    "a", "an", "and", "as", "at", "be", "by", "do", "for", "i", "if", "in", "is", "it", "no", "not", "of", "on", "or", "so",
    "the", "to", "up",
];

fn description_map(case: &BenchmarkCase, map: &RenameMap) -> RenameMap {
    let mut own = identifiers_in_text(&case.signature);
    own.extend(identifiers_in_text(&case.reference_body));
    let mut out = map.clone();
    out.entries.retain(|name, _| !PROSE_WORDS.contains(&name.to_ascii_lowercase().as_str()) || own.contains(name));
    out
}

/// Apply an already built map to a case and record it in the lineage.
pub fn apply_rename_map(case: &BenchmarkCase, map: &RenameMap, seed: u64) -> Result<BenchmarkCase, crate::cfront::FrontError> {
    let mut out = case.clone();
    out.reference_body = rename_source(&case.reference_body, map, true)?;
    out.signature = rename_source(&case.signature, map, true)?;
    out.partial_body = case.partial_body.as_deref().map(|p| rename_source(p, map, true)).transpose()?;
    out.function = map.get(&case.function).unwrap_or(&case.function).to_string();
    out.description = rename_words(&case.description, &description_map(case, map));
    out.context.deps = Vec::with_capacity(case.context.deps.len());
    for d in &case.context.deps {
        if d.kind == DepKind::Comment {
            continue;
        }
        let mut d = d.clone();
        d.text = rename_source(&d.text, map, true)?;
        d.name = map.get(&d.name).unwrap_or(&d.name).to_string();
        out.context.deps.push(d);
    }
    out.lineage.push(ObfuscationRecord {
        strategy: Strategy::Symbol,
        seed,
        rename_map: Some(map.clone()),
        inlined_callees: None,
        templates_applied: None,
        verified: false,
    });
    Ok(out)
}

//! Rename maps: seeded, style-preserving identifier substitution.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::segment::{apply_case, pieces, word_case, PieceKind};
use crate::cfront::lexer::{is_keyword, lex, TokenKind};
use crate::cfront::FrontError;

const BUILTIN_WORDLIST: &str = include_str!("../../data/wordlist.txt");

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenameMap {
    pub entries: BTreeMap<String, String>,
    pub seed: u64,
    pub exclusions: BTreeSet<String>,
}

impl RenameMap {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries.get(name).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenameError {
    #[error("wordlist is empty")]
    EmptyWordlist,
    #[error("wordlist has {available} words but {needed} distinct words need replacing")]
    WordlistTooSmall { needed: usize, available: usize },
}

/// The neutral pseudo-word list shipped with the tool.
pub fn builtin_wordlist() -> Vec<String> {
    parse_wordlist(BUILTIN_WORDLIST)
}

/// One lowercase word per line; blank lines and duplicates are ignored.
pub fn parse_wordlist(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|w| !w.is_empty() && seen.insert(w.clone()))
        .collect()
}

/// Build a rename map. Each distinct word of the non-excluded identifiers is
/// sent through a seed-keyed permutation of `wordlist`.
pub fn make_rename_map(
    identifiers: &BTreeSet<String>,
    seed: u64,
    exclusions: &BTreeSet<String>,
    wordlist: &[String],
) -> Result<RenameMap, RenameError> {
    if wordlist.is_empty() {
        return Err(RenameError::EmptyWordlist);
    }
    let mut permuted = wordlist.to_vec();
    permuted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut map = rename_with_permutation(identifiers, exclusions, &permuted)?;
    map.seed = seed;
    Ok(map)
}

/// Core of [`make_rename_map`] with the permutation given explicitly: the
/// i-th distinct word (in sorted order) is replaced by `permuted[i]`.
pub fn rename_with_permutation(
    identifiers: &BTreeSet<String>,
    exclusions: &BTreeSet<String>,
    permuted: &[String],
) -> Result<RenameMap, RenameError> {
    let targets: Vec<&String> =
        identifiers.iter().filter(|n| !exclusions.contains(*n) && !is_keyword(n)).collect();
    let words: BTreeSet<String> = targets
        .iter()
        .flat_map(|n| pieces(n).into_iter().filter(|p| p.kind == PieceKind::Word).map(|p| p.text.to_lowercase()))
        .collect();
    if words.len() > permuted.len() {
        return Err(RenameError::WordlistTooSmall { needed: words.len(), available: permuted.len() });
    }
    let word_map: BTreeMap<&str, &str> =
        words.iter().map(String::as_str).zip(permuted.iter().map(String::as_str)).collect();

    let mut taken: BTreeSet<String> = identifiers.iter().chain(exclusions.iter()).cloned().collect();
    let mut entries = BTreeMap::new();
    for old in targets {
        let mut new = String::new();
        for p in pieces(old) {
            match p.kind {
                PieceKind::Word => new.push_str(&apply_case(word_map[p.text.to_lowercase().as_str()], word_case(p.text, old))),
                PieceKind::Digits | PieceKind::Sep => new.push_str(p.text),
            }
        }
        if new.is_empty() || new == *old {
            continue;
        }
        let mut candidate = new.clone();
        let mut n = 2;
        while taken.contains(&candidate) || is_keyword(&candidate) {
            candidate = format!("{new}{n}");
            n += 1;
        }
        taken.insert(candidate.clone());
        entries.insert(old.clone(), candidate);
    }
    Ok(RenameMap { entries, seed: 0, exclusions: exclusions.clone() })
}

/// Apply `map` to C source text token by token. String and character
/// literals are never touched; with `drop_comments` each comment token is
/// replaced by a single space so the token count is unchanged.
pub fn rename_source(text: &str, map: &RenameMap, drop_comments: bool) -> Result<String, FrontError> {
    let tokens = lex(text)?;
    let mut out = String::with_capacity(text.len());
    for t in &tokens {
        match t.kind {
            TokenKind::Identifier => out.push_str(map.get(&t.text).unwrap_or(&t.text)),
            TokenKind::Comment if drop_comments => out.push(' '),
            TokenKind::PreprocessorDirective => out.push_str(&rename_directive(&t.text, map, drop_comments)),
            _ => out.push_str(&t.text),
        }
    }
    Ok(out)
}

/// Rename identifiers inside one directive line. `#include` and other
/// non-code directives are left alone.
pub fn rename_directive(text: &str, map: &RenameMap, drop_comments: bool) -> String {
    let Some(hash) = text.find('#') else { return text.to_string() };
    let Ok(sub) = lex(&text[hash + 1..]) else { return text.to_string() };
    let name = sub.iter().find(|t| !t.is_trivia()).map(|t| t.text.as_str()).unwrap_or("");
    if !matches!(name, "define" | "undef" | "if" | "ifdef" | "ifndef" | "elif") {
        return text.to_string();
    }
    let mut out = text[..=hash].to_string();
    for t in &sub {
        match t.kind {
            TokenKind::Identifier => out.push_str(map.get(&t.text).unwrap_or(&t.text)),
            TokenKind::Comment if drop_comments => out.push(' '),
            _ => out.push_str(&t.text),
        }
    }
    out
}

/// Whole-word replacement of renamed identifiers in free text.
pub fn rename_words(text: &str, map: &RenameMap) -> String {
    if map.is_empty() {
        return text.to_string();
    }
    let mut names: Vec<&String> = map.entries.keys().collect();
    names.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    let alternation = names.iter().map(|n| regex::escape(n)).collect::<Vec<_>>().join("|");
    // Identifier characters on either side mean the match is inside a longer word.
    let re = Regex::new(&format!(r"(^|[^A-Za-z0-9_])({alternation})([^A-Za-z0-9_]|$)")).expect("escaped names");
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    while let Some(c) = re.captures_at(text, pos) {
        let m = c.get(2).unwrap();
        out.push_str(&text[pos..m.start()]);
        out.push_str(&map.entries[m.as_str()]);
        pos = m.end();
    }
    out.push_str(&text[pos..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_identifiers_give_empty_map() {
        let m = make_rename_map(&set(&[]), 42, &set(&[]), &builtin_wordlist()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn explicit_permutation() {
        // Sorted distinct words: bar, foo -> first two of the permutation.
        let perm: Vec<String> = ["beta", "alpha", "gamma", "delta"].iter().map(|s| s.to_string()).collect();
        let m = rename_with_permutation(&set(&["foo_bar"]), &set(&[]), &perm).unwrap();
        assert_eq!(m.get("foo_bar"), Some("alpha_beta"));
    }

    #[test]
    fn exclusions_respected() {
        let m = make_rename_map(&set(&["printf"]), 1, &set(&["printf"]), &builtin_wordlist()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn empty_wordlist_errors() {
        assert_eq!(make_rename_map(&set(&["a"]), 1, &set(&[]), &[]), Err(RenameError::EmptyWordlist));
        let two: Vec<String> = vec!["x".into(), "y".into()];
        assert!(matches!(
            make_rename_map(&set(&["a_b_c"]), 1, &set(&[]), &two),
            Err(RenameError::WordlistTooSmall { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn style_preserved() {
        let ids = set(&["rb_push", "RB_CAPACITY", "expandIfNeeded", "RingBuffer", "XMLHttp2"]);
        let m = make_rename_map(&ids, 9, &set(&[]), &builtin_wordlist()).unwrap();
        let re_snake = Regex::new("^[a-z]+_[a-z]+$").unwrap();
        assert!(re_snake.is_match(m.get("rb_push").unwrap()));
        assert!(Regex::new("^[A-Z]+_[A-Z]+$").unwrap().is_match(m.get("RB_CAPACITY").unwrap()));
        assert!(Regex::new("^[a-z]+[A-Z][a-z]+[A-Z][a-z]+$").unwrap().is_match(m.get("expandIfNeeded").unwrap()));
        assert!(Regex::new("^[A-Z][a-z]+[A-Z][a-z]+$").unwrap().is_match(m.get("RingBuffer").unwrap()));
        assert!(Regex::new("^[A-Z]+[A-Z][a-z]+2$").unwrap().is_match(m.get("XMLHttp2").unwrap()));
        // Shared words map to the same replacement.
        let push = m.get("rb_push").unwrap().split('_').next().unwrap().to_string();
        assert_eq!(m.get("RB_CAPACITY").unwrap().split('_').next().unwrap(), push.to_uppercase());
    }

    #[test]
    fn collisions_get_suffix() {
        // With a single-word list every identifier made of one word collides.
        let perm: Vec<String> = vec!["zed".into(), "zed".into()];
        let m = rename_with_permutation(&set(&["a", "b"]), &set(&[]), &perm).unwrap();
        let mut values: Vec<_> = m.entries.values().cloned().collect();
        values.sort();
        assert_eq!(values, vec!["zed", "zed2"]);
    }

    #[test]
    fn source_renaming_keeps_strings_and_token_count() {
        let m = RenameMap { entries: [("foo".to_string(), "bazu".to_string())].into(), ..Default::default() };
        let src = "/* foo */ int foo(void) { return puts(\"foo\"); }\n#define FOO_X foo\n#include \"foo.h\"\n";
        let out = rename_source(src, &m, true).unwrap();
        assert_eq!(out, "  int bazu(void) { return puts(\"foo\"); }\n#define FOO_X bazu\n#include \"foo.h\"\n");
        let kept = rename_source(src, &m, false).unwrap();
        assert_eq!(lex(&kept).unwrap().len(), lex(src).unwrap().len());
        let significant = |t: &str| lex(t).unwrap().into_iter().filter(|t| !t.is_trivia()).count();
        assert_eq!(significant(&out), significant(src));
    }

    #[test]
    fn description_whole_words() {
        let m = RenameMap {
            entries: [("rb".to_string(), "kotu".to_string()), ("rb_push".to_string(), "kotu_sami".to_string())].into(),
            ..Default::default()
        };
        assert_eq!(rename_words("Call rb_push on rb (not rbx).", &m), "Call kotu_sami on kotu (not rbx).");
        assert_eq!(rename_words("rb rb", &m), "kotu kotu");
    }
}

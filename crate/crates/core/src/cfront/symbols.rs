//! Scope-aware name resolution over a parsed unit.
//!
//! Frame 0 is the file scope (own top-level declarations plus those of the
//! supplied headers). Each function adds a frame for its parameters and
//! labels, and every compound statement or declaring `for` adds a nested
//! frame. Identifier tokens are resolved innermost-frame-first; locals are
//! visible only from their declaration onwards.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::lexer::{lex, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolKind {
    Function,
    Variable,
    Type,
    StructMember,
    Macro,
    EnumConst,
    Label,
}

/// C name spaces: ordinary identifiers, tags, members and labels are separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Namespace {
    Ordinary,
    Tag,
    Member,
    Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub kind: SymbolKind,
    /// Declared in this unit (as opposed to one of the headers).
    pub defined_here: bool,
    pub decl_token: Option<usize>,
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub parent: Option<usize>,
    pub span: Span,
    pub names: BTreeMap<(Namespace, String), Entry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Symbol { frame: usize, kind: SymbolKind },
    /// Parameter of a function-like macro, inside its own definition.
    MacroParam,
    External,
}

/// An identifier found inside a preprocessor directive token.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectiveIdent {
    pub token: usize,
    /// Byte offset of the identifier within the directive text.
    pub offset: usize,
    pub name: String,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTable {
    pub path: String,
    pub frames: Vec<Frame>,
    pub resolutions: BTreeMap<usize, Resolution>,
    pub directive_idents: Vec<DirectiveIdent>,
}

impl SymbolTable {
    pub fn resolution(&self, token: usize) -> Option<Resolution> {
        self.resolutions.get(&token).copied()
    }

    pub fn kind_of(&self, token: usize) -> Option<SymbolKind> {
        match self.resolution(token)? {
            Resolution::Symbol { kind, .. } => Some(kind),
            _ => None,
        }
    }

    pub fn is_global(&self, token: usize) -> bool {
        matches!(self.resolution(token), Some(Resolution::Symbol { frame: 0, .. }))
    }

    /// Entry for an ordinary file-scope name.
    pub fn global(&self, name: &str) -> Option<&Entry> {
        self.frames[0].names.get(&(Namespace::Ordinary, name.to_string()))
    }

    /// Deepest frame whose span contains `token`.
    pub fn innermost_frame(&self, token: usize) -> usize {
        let mut best = 0;
        let mut best_len = usize::MAX;
        for (i, f) in self.frames.iter().enumerate() {
            if f.span.contains(&token) && f.span.len() <= best_len {
                best = i;
                best_len = f.span.len();
            }
        }
        best
    }

    /// Resolve an ordinary identifier as if it were spelled at `token`.
    pub fn lookup_ordinary(&self, name: &str, token: usize) -> Option<(usize, SymbolKind)> {
        let key = (Namespace::Ordinary, name.to_string());
        let mut frame = self.innermost_frame(token);
        loop {
            let f = &self.frames[frame];
            if let Some(e) = f.names.get(&key) {
                if frame == 0 || e.decl_token.is_none_or(|t| t <= token) {
                    return Some((frame, e.kind));
                }
            }
            frame = f.parent?;
        }
    }

    /// Names with at least one occurrence that has no in-project definition.
    pub fn external_names(&self, tokens: &[Token]) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self
            .resolutions
            .iter()
            .filter(|(_, r)| **r == Resolution::External)
            .map(|(&i, _)| tokens[i].text.clone())
            .collect();
        out.extend(
            self.directive_idents
                .iter()
                .filter(|d| d.resolution == Resolution::External)
                .map(|d| d.name.clone()),
        );
        out
    }

    /// Names declared anywhere in this unit's frames.
    pub fn declared_names(&self) -> BTreeSet<String> {
        self.frames
            .iter()
            .flat_map(|f| f.names.iter().filter(|(_, e)| e.defined_here).map(|((_, n), _)| n.clone()))
            .collect()
    }
}

struct Builder<'u> {
    unit: &'u SourceUnit,
    frames: Vec<Frame>,
    /// Declaration name tokens and the frame/kind they introduce.
    def_tokens: BTreeMap<usize, (usize, SymbolKind)>,
}

impl<'u> Builder<'u> {
    fn declare(&mut self, frame: usize, ns: Namespace, name: &str, kind: SymbolKind, token: Option<usize>, here: bool, origin: &str) {
        if name.is_empty() {
            return;
        }
        let key = (ns, name.to_string());
        let names = &mut self.frames[frame].names;
        match names.get_mut(&key) {
            Some(existing) => {
                if here && !existing.defined_here {
                    existing.defined_here = true;
                    existing.decl_token = token;
                    existing.origin = origin.to_string();
                }
            }
            None => {
                names.insert(key, Entry { kind, defined_here: here, decl_token: token, origin: origin.to_string() });
            }
        }
        if here {
            if let Some(t) = token {
                self.def_tokens.insert(t, (frame, kind));
            }
        }
    }

    fn declare_top(&mut self, node: &Node, here: bool, origin: &str) {
        let tok = |t: usize| here.then_some(t);
        match node {
            Node::Function(f) => {
                self.declare(0, Namespace::Ordinary, &f.name, SymbolKind::Function, tok(f.name_token), here, origin)
            }
            Node::Declaration(d) => {
                let kind = match d.kind {
                    DeclarationKind::Typedef => SymbolKind::Type,
                    _ => SymbolKind::Function,
                };
                for decl in &d.declarators {
                    let k = if kind == SymbolKind::Function && !decl.is_function { SymbolKind::Variable } else { kind };
                    self.declare(0, Namespace::Ordinary, &decl.name, k, tok(decl.name_token), here, origin);
                }
            }
            Node::GlobalVar(g) => {
                for decl in &g.declarators {
                    let k = if decl.is_function { SymbolKind::Function } else { SymbolKind::Variable };
                    self.declare(0, Namespace::Ordinary, &decl.name, k, tok(decl.name_token), here, origin);
                }
            }
            Node::Struct(s) => {
                if let (Some(tag), Some(t)) = (&s.tag, s.tag_token) {
                    self.declare(0, Namespace::Tag, tag, SymbolKind::Type, tok(t), here, origin);
                }
                for m in &s.members {
                    self.declare(0, Namespace::Member, &m.name, SymbolKind::StructMember, tok(m.name_token), here, origin);
                }
                for (name, t) in &s.enumerators {
                    self.declare(0, Namespace::Ordinary, name, SymbolKind::EnumConst, tok(*t), here, origin);
                }
                let k = if s.is_typedef { SymbolKind::Type } else { SymbolKind::Variable };
                for decl in &s.declarators {
                    self.declare(0, Namespace::Ordinary, &decl.name, k, tok(decl.name_token), here, origin);
                }
            }
            Node::Macro(m) => self.declare(0, Namespace::Ordinary, &m.name, SymbolKind::Macro, None, here, origin),
            Node::Directive | Node::Opaque => {}
        }
    }

    fn new_frame(&mut self, parent: usize, span: Span) -> usize {
        self.frames.push(Frame { parent: Some(parent), span, names: BTreeMap::new() });
        self.frames.len() - 1
    }

    fn declare_locals(&mut self, frame: usize, d: &LocalDecl) {
        let kind = if d.is_typedef { SymbolKind::Type } else { SymbolKind::Variable };
        let origin = self.unit.path.clone();
        for decl in &d.declarators {
            self.declare(frame, Namespace::Ordinary, &decl.name, kind, Some(decl.name_token), true, &origin);
        }
    }

    fn visit_stmt(&mut self, s: &Stmt, frame: usize, opaque: &mut Vec<Span>) {
        match &s.kind {
            StmtKind::Compound(items) => {
                let f = self.new_frame(frame, s.span.clone());
                for item in items {
                    self.visit_stmt(item, f, opaque);
                }
            }
            StmtKind::Decl(d) => self.declare_locals(frame, d),
            StmtKind::For { init, body, .. } => {
                let f = if let ForInit::Decl(d) = init {
                    let f = self.new_frame(frame, s.span.clone());
                    self.declare_locals(f, d);
                    f
                } else {
                    frame
                };
                self.visit_stmt(body, f, opaque);
            }
            StmtKind::If { then, els, .. } => {
                self.visit_stmt(then, frame, opaque);
                if let Some(e) = els {
                    self.visit_stmt(e, frame, opaque);
                }
            }
            StmtKind::While { body, .. }
            | StmtKind::DoWhile { body, .. }
            | StmtKind::Switch { body, .. }
            | StmtKind::Case { body, .. }
            | StmtKind::Default { body }
            | StmtKind::Labeled { body, .. } => self.visit_stmt(body, frame, opaque),
            StmtKind::Opaque => opaque.push(s.span.clone()),
            _ => {}
        }
    }

    fn lookup(&self, mut frame: usize, ns: Namespace, name: &str, at: usize) -> Option<(usize, SymbolKind)> {
        let key = (ns, name.to_string());
        loop {
            let f = &self.frames[frame];
            if let Some(e) = f.names.get(&key) {
                let visible = frame == 0 || ns == Namespace::Label || e.decl_token.is_none_or(|t| t <= at);
                if visible {
                    return Some((frame, e.kind));
                }
            }
            frame = f.parent?;
        }
    }
}

fn prev_significant(tokens: &[Token], i: usize) -> Option<&Token> {
    tokens[..i].iter().rev().find(|t| !t.is_trivia())
}

fn is_aggregate_keyword(t: &Token) -> bool {
    t.is_keyword("struct") || t.is_keyword("union") || t.is_keyword("enum")
}

/// Resolve every identifier token of `unit` against its own declarations
/// and the file-scope declarations of `headers`.
pub fn resolve_symbols(unit: &SourceUnit, headers: &[&SourceUnit]) -> SymbolTable {
    let mut b = Builder {
        unit,
        frames: vec![Frame { parent: None, span: 0..unit.tokens.len(), names: BTreeMap::new() }],
        def_tokens: BTreeMap::new(),
    };
    for tl in &unit.decls {
        b.declare_top(&tl.node, true, &unit.path);
    }
    for h in headers {
        if h.path == unit.path && !h.path.is_empty() {
            continue;
        }
        for tl in &h.decls {
            b.declare_top(&tl.node, false, &h.path);
        }
    }

    // Function frames; remember which frames belong to which top-level node.
    let mut fn_frames: BTreeMap<usize, std::ops::Range<usize>> = BTreeMap::new();
    let mut opaque: Vec<Span> = Vec::new();
    let mut param_frames: Vec<(Span, usize)> = Vec::new();
    for (idx, tl) in unit.decls.iter().enumerate() {
        match &tl.node {
            Node::Function(f) => {
                let first = b.frames.len();
                let ff = b.new_frame(0, tl.span.clone());
                for p in &f.params {
                    if let (Some(n), Some(t)) = (&p.name, p.name_token) {
                        b.declare(ff, Namespace::Ordinary, n, SymbolKind::Variable, Some(t), true, &unit.path);
                    }
                }
                f.body.walk(&mut |s| {
                    if let StmtKind::Labeled { label, label_token, .. } = &s.kind {
                        b.frames[ff].names.insert(
                            (Namespace::Label, label.clone()),
                            Entry { kind: SymbolKind::Label, defined_here: true, decl_token: Some(*label_token), origin: unit.path.clone() },
                        );
                        b.def_tokens.insert(*label_token, (ff, SymbolKind::Label));
                    }
                });
                b.visit_stmt(&f.body, ff, &mut opaque);
                fn_frames.insert(idx, first..b.frames.len());
            }
            Node::Declaration(_) | Node::GlobalVar(_) | Node::Struct(_) => {
                // Parameter names of prototypes live in their own frame.
                let decls: Vec<&Declarator> = match &tl.node {
                    Node::Declaration(d) => d.declarators.iter().collect(),
                    Node::GlobalVar(g) => g.declarators.iter().collect(),
                    Node::Struct(s) => s.declarators.iter().collect(),
                    _ => unreachable!(),
                };
                for d in decls.iter().filter(|d| d.is_function) {
                    let pf = b.new_frame(0, d.span.clone());
                    for p in &d.params {
                        if let (Some(n), Some(t)) = (&p.name, p.name_token) {
                            b.declare(pf, Namespace::Ordinary, n, SymbolKind::Variable, Some(t), true, &unit.path);
                        }
                    }
                    param_frames.push((d.span.clone(), pf));
                }
            }
            _ => {}
        }
    }

    let tokens = &unit.tokens;
    let mut resolutions = BTreeMap::new();
    let mut directive_idents = Vec::new();
    for (idx, tl) in unit.decls.iter().enumerate() {
        let parsed = !matches!(tl.node, Node::Opaque | Node::Directive | Node::Macro(_));
        for i in tl.span.clone() {
            let t = &tokens[i];
            if t.kind == TokenKind::PreprocessorDirective {
                resolve_directive(&b, i, t, &mut directive_idents);
                continue;
            }
            if !parsed || t.kind != TokenKind::Identifier {
                continue;
            }
            if opaque.iter().any(|s| s.contains(&i)) {
                continue;
            }
            if let Some(&(frame, kind)) = b.def_tokens.get(&i) {
                resolutions.insert(i, Resolution::Symbol { frame, kind });
                continue;
            }
            let frame = fn_frames
                .get(&idx)
                .and_then(|r| r.clone().rev().find(|&f| b.frames[f].span.contains(&i)))
                .or_else(|| param_frames.iter().find(|(s, _)| s.contains(&i)).map(|(_, f)| *f))
                .unwrap_or(0);
            let prev = prev_significant(tokens, i);
            let ns = match prev {
                Some(p) if p.is_punct(".") || p.is_punct("->") => Namespace::Member,
                Some(p) if is_aggregate_keyword(p) => Namespace::Tag,
                Some(p) if p.is_keyword("goto") => Namespace::Label,
                _ => Namespace::Ordinary,
            };
            let r = match b.lookup(frame, ns, &t.text, i) {
                Some((frame, kind)) => Resolution::Symbol { frame, kind },
                None => Resolution::External,
            };
            resolutions.insert(i, r);
        }
    }
    SymbolTable { path: unit.path.clone(), frames: b.frames, resolutions, directive_idents }
}

fn resolve_directive(b: &Builder, token: usize, t: &Token, out: &mut Vec<DirectiveIdent>) {
    let Some(hash) = t.text.find('#') else { return };
    let body = &t.text[hash + 1..];
    let Ok(sub) = lex(body) else { return };
    let mut offsets = Vec::with_capacity(sub.len());
    let mut off = hash + 1;
    for s in &sub {
        offsets.push(off);
        off += s.text.len();
    }
    let sig: Vec<usize> = (0..sub.len()).filter(|&i| !sub[i].is_trivia()).collect();
    let Some(&first) = sig.first() else { return };
    let directive = sub[first].text.as_str();
    if !matches!(directive, "define" | "undef" | "if" | "ifdef" | "ifndef" | "elif") {
        return;
    }
    let mut macro_params: Vec<String> = Vec::new();
    let mut start = 1;
    if directive == "define" && sig.len() > 1 {
        let name_i = sig[1];
        out.push(DirectiveIdent {
            token,
            offset: offsets[name_i],
            name: sub[name_i].text.clone(),
            resolution: match b.lookup(0, Namespace::Ordinary, &sub[name_i].text, token) {
                Some((frame, kind)) => Resolution::Symbol { frame, kind },
                None => Resolution::External,
            },
        });
        start = 2;
        // Function-like only when `(` follows the name immediately.
        if name_i + 1 < sub.len() && sub[name_i + 1].is_punct("(") {
            let mut k = 2;
            while k < sig.len() && !sub[sig[k]].is_punct(")") {
                let p = &sub[sig[k]];
                if p.kind == TokenKind::Identifier {
                    macro_params.push(p.text.clone());
                    out.push(DirectiveIdent {
                        token,
                        offset: offsets[sig[k]],
                        name: p.text.clone(),
                        resolution: Resolution::MacroParam,
                    });
                }
                k += 1;
            }
            start = k + 1;
        }
    }
    for (n, &i) in sig.iter().enumerate().skip(start) {
        let s = &sub[i];
        if s.kind != TokenKind::Identifier {
            continue;
        }
        let prev = (n > 0).then(|| &sub[sig[n - 1]]);
        let resolution = if macro_params.contains(&s.text) {
            Resolution::MacroParam
        } else if s.text == "defined" || s.text == "__VA_ARGS__" {
            Resolution::External
        } else {
            let ns = match prev {
                Some(p) if p.is_punct(".") || p.is_punct("->") => Namespace::Member,
                Some(p) if is_aggregate_keyword(p) => Namespace::Tag,
                _ => Namespace::Ordinary,
            };
            match b.lookup(0, ns, &s.text, token) {
                Some((frame, kind)) => Resolution::Symbol { frame, kind },
                None => Resolution::External,
            }
        };
        out.push(DirectiveIdent { token, offset: offsets[i], name: s.text.clone(), resolution });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::parse_source;

    fn token_of(u: &SourceUnit, name: &str, nth: usize) -> usize {
        u.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.kind == TokenKind::Identifier && t.text == name)
            .nth(nth)
            .map(|(i, _)| i)
            .unwrap()
    }

    #[test]
    fn local_and_global() {
        let u = parse_source("a.c", "int g;\nint f(void) { int i = 0; return i + g; }").unwrap();
        let st = resolve_symbols(&u, &[]);
        let i_use = token_of(&u, "i", 1);
        let g_use = token_of(&u, "g", 1);
        assert_eq!(st.kind_of(i_use), Some(SymbolKind::Variable));
        assert!(!st.is_global(i_use));
        assert_eq!(st.kind_of(g_use), Some(SymbolKind::Variable));
        assert!(st.is_global(g_use));
    }

    #[test]
    fn unknown_call_is_external() {
        let u = parse_source("a.c", "int f(void) { printf(\"x\"); return 0; }").unwrap();
        let st = resolve_symbols(&u, &[]);
        assert_eq!(st.resolution(token_of(&u, "printf", 0)), Some(Resolution::External));
        assert!(st.external_names(&u.tokens).contains("printf"));
    }

    #[test]
    fn macro_from_header() {
        let h = parse_source("m.h", "#define MAX(a, b) ((a) > (b) ? (a) : (b))\n").unwrap();
        let u = parse_source("a.c", "int f(int x) { return MAX(x, 3); }").unwrap();
        let st = resolve_symbols(&u, &[&h]);
        assert_eq!(st.kind_of(token_of(&u, "MAX", 0)), Some(SymbolKind::Macro));
        assert!(!st.global("MAX").unwrap().defined_here);
    }

    #[test]
    fn shadowing_resolves_innermost() {
        let src = "int x;\nint f(void) { int x = 1; { int x = 2; x++; } return x; }";
        let u = parse_source("a.c", src).unwrap();
        let st = resolve_symbols(&u, &[]);
        let inner_use = token_of(&u, "x", 3);
        let outer_use = token_of(&u, "x", 4);
        let fr = |t| match st.resolution(t) {
            Some(Resolution::Symbol { frame, .. }) => frame,
            other => panic!("{other:?}"),
        };
        assert_ne!(fr(inner_use), fr(outer_use));
        assert_ne!(fr(outer_use), 0);
    }

    #[test]
    fn use_before_local_declaration_sees_global() {
        let u = parse_source("a.c", "int n;\nint f(void) { n = 2; int n = 3; return n; }").unwrap();
        let st = resolve_symbols(&u, &[]);
        assert!(st.is_global(token_of(&u, "n", 1)));
        assert!(!st.is_global(token_of(&u, "n", 3)));
    }

    #[test]
    fn members_tags_labels() {
        let src = "struct p { int x; };\nint f(struct p *q) { if (q->x) goto done; q->x = 1;\ndone:\n return 0; }";
        let u = parse_source("a.c", src).unwrap();
        let st = resolve_symbols(&u, &[]);
        assert_eq!(st.kind_of(token_of(&u, "x", 1)), Some(SymbolKind::StructMember));
        assert_eq!(st.kind_of(token_of(&u, "p", 1)), Some(SymbolKind::Type));
        assert_eq!(st.kind_of(token_of(&u, "done", 0)), Some(SymbolKind::Label));
        assert_eq!(st.kind_of(token_of(&u, "done", 1)), Some(SymbolKind::Label));
    }

    #[test]
    fn directive_identifiers() {
        let src = "#define LIMIT 10\n#define CLAMP(v) ((v) > LIMIT ? LIMIT : (v))\n#include \"x.h\"\n";
        let u = parse_source("a.c", src).unwrap();
        let st = resolve_symbols(&u, &[]);
        let names: Vec<_> = st.directive_idents.iter().map(|d| (d.name.as_str(), d.resolution)).collect();
        assert!(names.contains(&("CLAMP", Resolution::Symbol { frame: 0, kind: SymbolKind::Macro })));
        assert!(names.contains(&("v", Resolution::MacroParam)));
        assert_eq!(names.iter().filter(|(n, _)| *n == "LIMIT").count(), 3);
        assert!(!names.iter().any(|(n, _)| *n == "x"));
        for d in &st.directive_idents {
            assert_eq!(&u.tokens[d.token].text[d.offset..d.offset + d.name.len()], d.name);
        }
    }

    #[test]
    fn one_resolution_per_identifier() {
        let src = "typedef int T;\nstatic T g;\nT f(T a) { T b = a; for (int i = 0; i < b; i++) g += i; return g; }";
        let u = parse_source("a.c", src).unwrap();
        let st = resolve_symbols(&u, &[]);
        for (i, t) in u.tokens.iter().enumerate() {
            if t.kind == TokenKind::Identifier {
                assert!(st.resolution(i).is_some(), "unresolved {} at {i}", t.text);
            }
        }
        assert_eq!(st.kind_of(token_of(&u, "T", 2)), Some(SymbolKind::Type));
    }
}

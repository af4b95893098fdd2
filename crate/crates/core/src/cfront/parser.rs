//! Recursive-descent parser for a pragmatic C99 subset.
//!
//! The parser never fails as a whole: top-level regions it cannot handle
//! become [`Node::Opaque`] and statements it cannot handle become
//! [`StmtKind::Opaque`], each carrying its raw token span.

use std::collections::HashSet;

use super::ast::*;
use super::lexer::{Token, TokenKind};

#[derive(Debug)]
pub(crate) struct ParseError;

pub(crate) type PResult<T> = Result<T, ParseError>;

/// Typedef names commonly provided by system headers, which are never parsed.
pub const BUILTIN_TYPEDEFS: &[&str] = &[
    "size_t", "ssize_t", "ptrdiff_t", "intptr_t", "uintptr_t", "intmax_t", "uintmax_t",
    "int8_t", "int16_t", "int32_t", "int64_t", "uint8_t", "uint16_t", "uint32_t", "uint64_t",
    "FILE", "va_list", "bool", "wchar_t", "off_t", "pid_t", "time_t", "clock_t", "mode_t",
    "sig_atomic_t", "socklen_t", "pthread_t", "pthread_mutex_t", "DIR", "jmp_buf", "__int128",
];

/// Identifiers that behave like declaration qualifiers in GNU C.
const QUALIFIER_IDENTS: &[&str] = &[
    "__inline", "__inline__", "__restrict", "__restrict__", "__extension__", "__const",
    "__volatile__", "_Noreturn", "__thread", "_Thread_local", "__signed__",
];

const TYPE_KEYWORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "_Bool",
    "_Complex", "_Imaginary",
];

const QUALIFIER_KEYWORDS: &[&str] = &["const", "volatile", "restrict", "inline"];
const STORAGE_KEYWORDS: &[&str] = &["typedef", "extern", "static", "auto", "register"];

fn binary_precedence(op: &str) -> Option<u8> {
    Some(match op {
        "||" => 1,
        "&&" => 2,
        "|" => 3,
        "^" => 4,
        "&" => 5,
        "==" | "!=" => 6,
        "<" | ">" | "<=" | ">=" => 7,
        "<<" | ">>" => 8,
        "+" | "-" => 9,
        "*" | "/" | "%" => 10,
        _ => return None,
    })
}

fn is_assign_op(op: &str) -> bool {
    matches!(op, "=" | "+=" | "-=" | "*=" | "/=" | "%=" | "<<=" | ">>=" | "&=" | "^=" | "|=")
}

#[derive(Default)]
struct DeclSpec {
    span: Span,
    is_typedef: bool,
    is_static: bool,
    is_extern: bool,
    aggregate: Option<AggInfo>,
}

struct AggInfo {
    aggregate: Aggregate,
    tag: Option<String>,
    tag_token: Option<usize>,
    members: Vec<Member>,
    enumerators: Vec<(String, usize)>,
    body: Option<Span>,
}

pub struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    prev_end: usize,
    typedefs: HashSet<String>,
}

/// Parse a token list into a source unit with no externally known typedefs.
pub fn parse(tokens: Vec<Token>) -> SourceUnit {
    parse_with_typedefs("", tokens, &HashSet::new())
}

/// Parse with additional typedef names (for example from project headers).
pub fn parse_with_typedefs(path: &str, tokens: Vec<Token>, typedefs: &HashSet<String>) -> SourceUnit {
    let (decls, gaps) = {
        let mut p = Parser::new(&tokens, typedefs);
        p.parse_unit()
    };
    SourceUnit { path: path.to_string(), tokens, decls, gaps }
}

/// Typedef names declared in a parsed unit (including struct typedefs).
pub fn declared_typedefs(unit: &SourceUnit) -> HashSet<String> {
    let mut out = HashSet::new();
    for d in &unit.decls {
        match &d.node {
            Node::Declaration(decl) if decl.kind == DeclarationKind::Typedef => {
                out.extend(decl.declarators.iter().map(|d| d.name.clone()));
            }
            Node::Struct(s) if s.is_typedef => {
                out.extend(s.declarators.iter().map(|d| d.name.clone()));
            }
            _ => {}
        }
    }
    out
}

impl<'t> Parser<'t> {
    pub fn new(toks: &'t [Token], typedefs: &HashSet<String>) -> Self {
        let mut all: HashSet<String> = BUILTIN_TYPEDEFS.iter().map(|s| s.to_string()).collect();
        all.extend(typedefs.iter().cloned());
        Parser { toks, pos: 0, prev_end: 0, typedefs: all }
    }

    // ---- token navigation -------------------------------------------------

    fn sig_index(&self, from: usize) -> Option<usize> {
        (from..self.toks.len()).find(|&i| !self.toks[i].is_trivia())
    }

    fn peek_index(&self) -> Option<usize> {
        self.sig_index(self.pos)
    }

    fn peek(&self) -> Option<&'t Token> {
        self.peek_index().map(|i| &self.toks[i])
    }

    fn peek_nth(&self, n: usize) -> Option<&'t Token> {
        let mut i = self.peek_index()?;
        for _ in 0..n {
            i = self.sig_index(i + 1)?;
        }
        Some(&self.toks[i])
    }

    fn bump(&mut self) -> PResult<usize> {
        let i = self.peek_index().ok_or(ParseError)?;
        self.pos = i + 1;
        self.prev_end = i + 1;
        Ok(i)
    }

    fn start(&self) -> usize {
        self.peek_index().unwrap_or(self.toks.len())
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn at_keyword(&self, k: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(k))
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.pos = self.peek_index().unwrap() + 1;
            self.prev_end = self.pos;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<usize> {
        if self.at_punct(p) {
            self.bump()
        } else {
            Err(ParseError)
        }
    }

    fn expect_ident(&mut self) -> PResult<(String, usize)> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                let i = self.bump()?;
                Ok((self.toks[i].text.clone(), i))
            }
            _ => Err(ParseError),
        }
    }

    /// Consume a balanced bracket group starting at the current `open` token.
    fn skip_balanced(&mut self, open: &str, close: &str) -> PResult<()> {
        self.expect_punct(open)?;
        let mut depth = 1;
        while depth > 0 {
            let i = self.bump()?;
            let t = &self.toks[i];
            if t.is_punct(open) {
                depth += 1;
            } else if t.is_punct(close) {
                depth -= 1;
            }
        }
        Ok(())
    }

    fn is_typedef_name(&self, t: &Token) -> bool {
        t.kind == TokenKind::Identifier && self.typedefs.contains(&t.text)
    }

    // ---- top level ---------------------------------------------------------

    fn parse_unit(&mut self) -> (Vec<TopLevel>, Vec<Span>) {
        let mut decls = Vec::new();
        let mut gaps = Vec::new();
        loop {
            let gap_start = self.pos;
            while self.pos < self.toks.len()
                && matches!(self.toks[self.pos].kind, TokenKind::Whitespace | TokenKind::Comment)
            {
                self.pos += 1;
            }
            if self.pos > gap_start {
                gaps.push(gap_start..self.pos);
            }
            if self.pos >= self.toks.len() {
                break;
            }
            let start = self.pos;
            if self.toks[start].kind == TokenKind::PreprocessorDirective {
                self.pos += 1;
                let node = match parse_define(&self.toks[start].text) {
                    Some(m) => Node::Macro(m),
                    None => Node::Directive,
                };
                decls.push(TopLevel { span: start..start + 1, node });
                continue;
            }
            let saved_typedefs = self.typedefs.clone();
            match self.parse_external_decl() {
                Ok(node) => decls.push(TopLevel { span: start..self.prev_end, node }),
                Err(ParseError) => {
                    self.typedefs = saved_typedefs;
                    self.pos = start;
                    self.skip_opaque_top();
                    decls.push(TopLevel { span: start..self.prev_end, node: Node::Opaque });
                }
            }
        }
        (decls, gaps)
    }

    fn skip_opaque_top(&mut self) {
        let mut depth = 0i32;
        let first = self.pos;
        let mut i = self.pos;
        while i < self.toks.len() {
            let t = &self.toks[i];
            match t.kind {
                TokenKind::Whitespace | TokenKind::Comment => {
                    i += 1;
                    continue;
                }
                // Only directives sitting between top-level constructs end a region.
                TokenKind::PreprocessorDirective if depth <= 0 => break,
                TokenKind::PreprocessorDirective => {
                    i += 1;
                    continue;
                }
                _ => {}
            }
            i += 1;
            self.pos = i;
            self.prev_end = i;
            if t.kind != TokenKind::Punctuator {
                continue;
            }
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" => depth -= 1,
                "}" => {
                    depth -= 1;
                    if depth <= 0 && !self.at_punct(";") {
                        break;
                    }
                }
                ";" if depth <= 0 => break,
                _ => {}
            }
        }
        if self.prev_end <= first {
            // Always make progress.
            self.pos = first + 1;
            self.prev_end = first + 1;
        }
    }

    fn parse_external_decl(&mut self) -> PResult<Node> {
        let spec = self.parse_decl_specifiers(false)?;
        if self.eat_punct(";") {
            return Ok(match spec.aggregate {
                Some(agg) if agg.body.is_some() => Node::Struct(make_struct(agg, false, vec![])),
                _ => Node::Declaration(Declaration { kind: DeclarationKind::Other, declarators: vec![] }),
            });
        }
        let mut declarators = Vec::new();
        loop {
            let d = self.parse_declarator(false)?;
            if declarators.is_empty() && d.decl.is_function && !spec.is_typedef && self.at_punct("{") {
                let signature = spec.span.start..self.prev_end;
                let body = self.parse_compound()?;
                let is_variadic = d.variadic;
                return Ok(Node::Function(FunctionDef {
                    name: d.decl.name,
                    name_token: d.decl.name_token,
                    signature,
                    specifiers: spec.span,
                    params: d.decl.params,
                    body,
                    is_variadic,
                    is_static: spec.is_static,
                }));
            }
            let mut decl = d.decl;
            if spec.is_typedef {
                self.typedefs.insert(decl.name.clone());
            }
            if self.eat_punct("=") {
                decl.init = Some(self.parse_initializer()?);
                decl.span.end = self.prev_end;
            }
            declarators.push(decl);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(";")?;
        if let Some(agg) = spec.aggregate.filter(|a| a.body.is_some()) {
            return Ok(Node::Struct(make_struct(agg, spec.is_typedef, declarators)));
        }
        if spec.is_typedef {
            return Ok(Node::Declaration(Declaration { kind: DeclarationKind::Typedef, declarators }));
        }
        if declarators.iter().all(|d| d.is_function) {
            let first = &declarators[0];
            return Ok(Node::Declaration(Declaration {
                kind: DeclarationKind::Prototype {
                    name: first.name.clone(),
                    name_token: first.name_token,
                    is_static: spec.is_static,
                },
                declarators,
            }));
        }
        Ok(Node::GlobalVar(GlobalVar { declarators, is_extern: spec.is_extern, is_static: spec.is_static }))
    }

    // ---- declarations --------------------------------------------------------

    fn skip_attribute(&mut self) -> PResult<bool> {
        match self.peek() {
            Some(t)
                if t.kind == TokenKind::Identifier
                    && matches!(t.text.as_str(), "__attribute__" | "__attribute" | "__declspec" | "__asm__" | "__asm" | "asm" | "_Alignas") =>
            {
                self.bump()?;
                if self.at_punct("(") {
                    self.skip_balanced("(", ")")?;
                }
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    fn parse_decl_specifiers(&mut self, in_block: bool) -> PResult<DeclSpec> {
        let start = self.start();
        let mut spec = DeclSpec::default();
        let mut seen_type = false;
        let mut consumed = false;
        loop {
            if self.peek().is_some_and(|t| matches!(t.text.as_str(), "__asm__" | "__asm" | "asm")) {
                break;
            }
            if self.skip_attribute()? {
                consumed = true;
                continue;
            }
            let Some(t) = self.peek() else { break };
            match t.kind {
                TokenKind::Keyword => {
                    let k = t.text.as_str();
                    if STORAGE_KEYWORDS.contains(&k) {
                        spec.is_typedef |= k == "typedef";
                        spec.is_static |= k == "static";
                        spec.is_extern |= k == "extern";
                        self.bump()?;
                    } else if QUALIFIER_KEYWORDS.contains(&k) {
                        self.bump()?;
                    } else if TYPE_KEYWORDS.contains(&k) {
                        seen_type = true;
                        self.bump()?;
                    } else if matches!(k, "struct" | "union" | "enum") {
                        spec.aggregate = Some(self.parse_aggregate()?);
                        seen_type = true;
                    } else {
                        break;
                    }
                }
                TokenKind::Identifier if QUALIFIER_IDENTS.contains(&t.text.as_str()) => {
                    self.bump()?;
                }
                TokenKind::Identifier
                    if !seen_type
                        && !in_block
                        && !self.is_typedef_name(t)
                        && self.peek_nth(1).is_some_and(|n| {
                            n.kind == TokenKind::Keyword
                                && (TYPE_KEYWORDS.contains(&n.text.as_str())
                                    || STORAGE_KEYWORDS.contains(&n.text.as_str())
                                    || QUALIFIER_KEYWORDS.contains(&n.text.as_str())
                                    || matches!(n.text.as_str(), "struct" | "union" | "enum"))
                        }) =>
                {
                    // Export or annotation macro such as `API int f(void);`.
                    self.bump()?;
                }
                TokenKind::Identifier if !seen_type => {
                    let next = self.peek_nth(1);
                    let known = self.is_typedef_name(t);
                    let looks_like_type = next.is_some_and(|n| {
                        n.kind == TokenKind::Identifier
                            || (n.is_punct("*") && !in_block)
                            || (n.is_punct("*")
                                && self.peek_nth(2).is_some_and(|x| x.kind == TokenKind::Identifier || x.is_punct("*")))
                    });
                    if known || looks_like_type {
                        seen_type = true;
                        self.bump()?;
                    } else {
                        break;
                    }
                }
                _ => break,
            }
            consumed = true;
        }
        if !consumed {
            return Err(ParseError);
        }
        spec.span = start..self.prev_end;
        Ok(spec)
    }

    fn parse_aggregate(&mut self) -> PResult<AggInfo> {
        let kw = self.bump()?;
        let aggregate = match self.toks[kw].text.as_str() {
            "struct" => Aggregate::Struct,
            "union" => Aggregate::Union,
            _ => Aggregate::Enum,
        };
        while self.skip_attribute()? {}
        let (tag, tag_token) = match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                let (n, i) = self.expect_ident()?;
                (Some(n), Some(i))
            }
            _ => (None, None),
        };
        let mut info = AggInfo { aggregate, tag, tag_token, members: vec![], enumerators: vec![], body: None };
        if !self.at_punct("{") {
            if info.tag.is_none() {
                return Err(ParseError);
            }
            return Ok(info);
        }
        let body_start = self.bump()?;
        if aggregate == Aggregate::Enum {
            while !self.at_punct("}") {
                let (name, tok) = self.expect_ident()?;
                if self.eat_punct("=") {
                    self.parse_ternary()?;
                }
                info.enumerators.push((name, tok));
                if !self.eat_punct(",") {
                    break;
                }
            }
        } else {
            while !self.at_punct("}") {
                let member_start = self.start();
                let spec = self.parse_decl_specifiers(true)?;
                let mut type_names: Vec<String> = self.toks[member_start..spec.span.end]
                    .iter()
                    .filter(|t| t.kind == TokenKind::Identifier)
                    .map(|t| t.text.clone())
                    .collect();
                if let Some(nested) = &spec.aggregate {
                    if nested.body.is_some() {
                        // Members of anonymous nested aggregates are reachable directly.
                        info.members.extend(nested.members.iter().cloned());
                        type_names.retain(|n| !nested.members.iter().any(|m| &m.name == n));
                    }
                }
                if self.eat_punct(";") {
                    continue;
                }
                loop {
                    if self.at_punct(":") {
                        self.bump()?;
                        self.parse_ternary()?;
                    } else {
                        let d = self.parse_declarator(false)?;
                        if self.eat_punct(":") {
                            self.parse_ternary()?;
                        }
                        info.members.push(Member {
                            name: d.decl.name,
                            name_token: d.decl.name_token,
                            type_names: type_names.clone(),
                        });
                    }
                    while self.skip_attribute()? {}
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
            }
        }
        let end = self.expect_punct("}")?;
        info.body = Some(body_start..end + 1);
        while self.skip_attribute()? {}
        Ok(info)
    }

    fn parse_declarator(&mut self, abstract_ok: bool) -> PResult<DeclaratorInfo> {
        let start = self.start();
        while self.at_punct("*") {
            self.bump()?;
            loop {
                match self.peek() {
                    Some(t) if t.kind == TokenKind::Keyword && QUALIFIER_KEYWORDS.contains(&t.text.as_str()) => {
                        self.bump()?;
                    }
                    Some(t) if t.kind == TokenKind::Identifier && QUALIFIER_IDENTS.contains(&t.text.as_str()) => {
                        self.bump()?;
                    }
                    _ => {
                        if !self.skip_attribute()? {
                            break;
                        }
                    }
                }
            }
        }
        let mut info;
        let mut direct_name = false;
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier && !(abstract_ok && self.is_typedef_name(t)) => {
                let (name, tok) = self.expect_ident()?;
                info = DeclaratorInfo::named(name, tok);
                direct_name = true;
            }
            Some(t) if t.is_punct("(") && self.nested_declarator_follows(abstract_ok) => {
                self.bump()?;
                info = self.parse_declarator(abstract_ok)?;
                info.decl.is_function = false;
                self.expect_punct(")")?;
            }
            _ if abstract_ok => info = DeclaratorInfo::named(String::new(), usize::MAX),
            _ => return Err(ParseError),
        }
        let mut first_suffix = true;
        loop {
            if self.at_punct("[") {
                self.skip_balanced("[", "]")?;
            } else if self.at_punct("(") {
                let (params, variadic) = self.parse_params()?;
                if first_suffix && (direct_name || info.decl.name.is_empty()) {
                    info.decl.is_function = true;
                    info.decl.params = params;
                    info.variadic = variadic;
                }
            } else {
                break;
            }
            first_suffix = false;
        }
        while self.skip_attribute()? {}
        info.decl.span = start..self.prev_end;
        Ok(info)
    }

    fn nested_declarator_follows(&self, abstract_ok: bool) -> bool {
        match self.peek_nth(1) {
            Some(t) if t.is_punct("*") || t.is_punct("(") || t.is_punct("^") => true,
            Some(t) if t.kind == TokenKind::Identifier => !(abstract_ok && self.is_typedef_name(t)),
            _ => false,
        }
    }

    fn parse_params(&mut self) -> PResult<(Vec<Param>, bool)> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        let mut variadic = false;
        if self.eat_punct(")") {
            return Ok((params, false));
        }
        if self.at_keyword("void") && self.peek_nth(1).is_some_and(|t| t.is_punct(")")) {
            self.bump()?;
            self.bump()?;
            return Ok((params, false));
        }
        loop {
            if self.eat_punct("...") {
                variadic = true;
                break;
            }
            let start = self.start();
            self.parse_decl_specifiers(true)?;
            let d = self.parse_declarator(true)?;
            let named = !d.decl.name.is_empty();
            params.push(Param {
                name: named.then(|| d.decl.name.clone()),
                name_token: named.then_some(d.decl.name_token),
                span: start..self.prev_end,
            });
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        Ok((params, variadic))
    }

    fn parse_initializer(&mut self) -> PResult<Expr> {
        if !self.at_punct("{") {
            return self.parse_assign();
        }
        let start = self.bump()?;
        let mut items = Vec::new();
        while !self.at_punct("}") {
            let item_start = self.start();
            if self.at_punct(".") || self.at_punct("[") {
                while self.at_punct(".") || self.at_punct("[") {
                    if self.eat_punct(".") {
                        self.expect_ident()?;
                    } else {
                        self.skip_balanced("[", "]")?;
                    }
                }
                let designators = item_start..self.prev_end;
                self.expect_punct("=")?;
                let value = self.parse_initializer()?;
                items.push(Expr {
                    span: item_start..self.prev_end,
                    kind: ExprKind::Designated { designators, value: Box::new(value) },
                });
            } else {
                items.push(self.parse_initializer()?);
            }
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct("}")?;
        Ok(Expr { span: start..self.prev_end, kind: ExprKind::InitList(items) })
    }

    // ---- statements ------------------------------------------------------------

    fn is_decl_start(&self) -> bool {
        let Some(t) = self.peek() else { return false };
        match t.kind {
            TokenKind::Keyword => {
                let k = t.text.as_str();
                STORAGE_KEYWORDS.contains(&k)
                    || QUALIFIER_KEYWORDS.contains(&k)
                    || TYPE_KEYWORDS.contains(&k)
                    || matches!(k, "struct" | "union" | "enum")
            }
            TokenKind::Identifier => {
                let next = self.peek_nth(1);
                if next.is_some_and(|n| n.is_punct(":")) {
                    return false;
                }
                if QUALIFIER_IDENTS.contains(&t.text.as_str()) || t.text == "__attribute__" {
                    return true;
                }
                if self.is_typedef_name(t) {
                    return true;
                }
                match next {
                    Some(n) if n.kind == TokenKind::Identifier => true,
                    Some(n) if n.is_punct("*") => {
                        let mut k = 1;
                        while self.peek_nth(k).is_some_and(|x| x.is_punct("*")) {
                            k += 1;
                        }
                        let name = self.peek_nth(k);
                        let after = self.peek_nth(k + 1);
                        name.is_some_and(|x| x.kind == TokenKind::Identifier)
                            && after.is_some_and(|a| {
                                a.is_punct(";") || a.is_punct("=") || a.is_punct(",") || a.is_punct("[")
                            })
                            && (k > 1 || t.text.ends_with("_t") || after.is_some_and(|a| !a.is_punct(";")))
                    }
                    _ => false,
                }
            }
            _ => false,
        }
    }

    fn parse_local_decl(&mut self) -> PResult<LocalDecl> {
        let spec = self.parse_decl_specifiers(true)?;
        let mut declarators = Vec::new();
        if !self.at_punct(";") {
            loop {
                let d = self.parse_declarator(false)?;
                let mut decl = d.decl;
                if spec.is_typedef {
                    self.typedefs.insert(decl.name.clone());
                }
                if self.eat_punct("=") {
                    decl.init = Some(self.parse_initializer()?);
                    decl.span.end = self.prev_end;
                }
                declarators.push(decl);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(";")?;
        Ok(LocalDecl { specifiers: spec.span, declarators, is_static: spec.is_static, is_typedef: spec.is_typedef })
    }

    fn parse_compound(&mut self) -> PResult<Stmt> {
        let start = self.expect_punct("{")?;
        let mut items = Vec::new();
        loop {
            if self.at_punct("}") {
                break;
            }
            if self.peek().is_none() {
                return Err(ParseError);
            }
            items.push(self.parse_block_item());
        }
        self.expect_punct("}")?;
        Ok(Stmt { span: start..self.prev_end, kind: StmtKind::Compound(items) })
    }

    /// Parse one block item, degrading to an opaque statement on failure.
    fn parse_block_item(&mut self) -> Stmt {
        let start = self.start();
        let saved = self.pos;
        let saved_typedefs = self.typedefs.clone();
        let result = if self.is_decl_start() {
            self.parse_local_decl()
                .map(|d| Stmt { span: start..self.prev_end, kind: StmtKind::Decl(d) })
        } else {
            self.parse_statement()
        };
        match result {
            Ok(s) => s,
            Err(ParseError) => {
                self.pos = saved;
                self.typedefs = saved_typedefs;
                self.skip_opaque_stmt();
                Stmt { span: start..self.prev_end, kind: StmtKind::Opaque }
            }
        }
    }

    fn skip_opaque_stmt(&mut self) {
        let mut depth = 0i32;
        let first = self.start();
        while let Some(i) = self.peek_index() {
            let t = &self.toks[i];
            if depth == 0 && t.is_punct("}") && i != first {
                break;
            }
            if depth == 0 && t.is_punct("}") {
                break;
            }
            self.pos = i + 1;
            self.prev_end = i + 1;
            match t.text.as_str() {
                "(" | "[" | "{" if t.kind == TokenKind::Punctuator => depth += 1,
                ")" | "]" if t.kind == TokenKind::Punctuator => depth -= 1,
                "}" if t.kind == TokenKind::Punctuator => {
                    depth -= 1;
                    if depth == 0 && !self.at_punct(";") {
                        break;
                    }
                }
                ";" if t.kind == TokenKind::Punctuator && depth <= 0 => break,
                _ => {}
            }
        }
        if self.prev_end <= first {
            self.pos = first + 1;
            self.prev_end = first + 1;
        }
    }

    fn parse_paren_expr(&mut self) -> PResult<Expr> {
        self.expect_punct("(")?;
        let e = self.parse_expr()?;
        self.expect_punct(")")?;
        Ok(e)
    }

    fn parse_statement(&mut self) -> PResult<Stmt> {
        let start = self.start();
        let t = self.peek().ok_or(ParseError)?;
        let kind = if t.is_punct("{") {
            return self.parse_compound();
        } else if t.is_punct(";") {
            self.bump()?;
            StmtKind::Expr(None)
        } else if t.kind == TokenKind::Keyword {
            match t.text.as_str() {
                "if" => {
                    self.bump()?;
                    let cond = self.parse_paren_expr()?;
                    let then = Box::new(self.parse_sub_statement()?);
                    let els = if self.at_keyword("else") {
                        self.bump()?;
                        Some(Box::new(self.parse_sub_statement()?))
                    } else {
                        None
                    };
                    StmtKind::If { cond, then, els }
                }
                "while" => {
                    self.bump()?;
                    let cond = self.parse_paren_expr()?;
                    StmtKind::While { cond, body: Box::new(self.parse_sub_statement()?) }
                }
                "do" => {
                    self.bump()?;
                    let body = Box::new(self.parse_sub_statement()?);
                    if !self.at_keyword("while") {
                        return Err(ParseError);
                    }
                    self.bump()?;
                    let cond = self.parse_paren_expr()?;
                    self.expect_punct(";")?;
                    StmtKind::DoWhile { body, cond }
                }
                "for" => {
                    self.bump()?;
                    self.expect_punct("(")?;
                    let init = if self.eat_punct(";") {
                        ForInit::None
                    } else if self.is_decl_start() {
                        ForInit::Decl(self.parse_local_decl()?)
                    } else {
                        let e = self.parse_expr()?;
                        self.expect_punct(";")?;
                        ForInit::Expr(e)
                    };
                    let cond = if self.at_punct(";") { None } else { Some(self.parse_expr()?) };
                    self.expect_punct(";")?;
                    let step = if self.at_punct(")") { None } else { Some(self.parse_expr()?) };
                    self.expect_punct(")")?;
                    StmtKind::For { init, cond, step, body: Box::new(self.parse_sub_statement()?) }
                }
                "switch" => {
                    self.bump()?;
                    let cond = self.parse_paren_expr()?;
                    StmtKind::Switch { cond, body: Box::new(self.parse_sub_statement()?) }
                }
                "case" => {
                    self.bump()?;
                    let value = self.parse_ternary()?;
                    self.expect_punct(":")?;
                    StmtKind::Case { value, body: Box::new(self.parse_sub_statement()?) }
                }
                "default" => {
                    self.bump()?;
                    self.expect_punct(":")?;
                    StmtKind::Default { body: Box::new(self.parse_sub_statement()?) }
                }
                "return" => {
                    self.bump()?;
                    let e = if self.at_punct(";") { None } else { Some(self.parse_expr()?) };
                    self.expect_punct(";")?;
                    StmtKind::Return(e)
                }
                "break" => {
                    self.bump()?;
                    self.expect_punct(";")?;
                    StmtKind::Break
                }
                "continue" => {
                    self.bump()?;
                    self.expect_punct(";")?;
                    StmtKind::Continue
                }
                "goto" => {
                    self.bump()?;
                    let (label, label_token) = self.expect_ident()?;
                    self.expect_punct(";")?;
                    StmtKind::Goto { label, label_token }
                }
                "sizeof" => self.parse_expr_statement()?,
                _ => return Err(ParseError),
            }
        } else if t.kind == TokenKind::Identifier && self.peek_nth(1).is_some_and(|n| n.is_punct(":")) {
            let (label, label_token) = self.expect_ident()?;
            self.bump()?;
            StmtKind::Labeled { label, label_token, body: Box::new(self.parse_sub_statement()?) }
        } else {
            self.parse_expr_statement()?
        };
        Ok(Stmt { span: start..self.prev_end, kind })
    }

    /// A statement in a nested position (if/loop body); declarations are not allowed there.
    fn parse_sub_statement(&mut self) -> PResult<Stmt> {
        if self.at_punct("{") {
            return self.parse_compound();
        }
        self.parse_statement()
    }

    fn parse_expr_statement(&mut self) -> PResult<StmtKind> {
        let e = self.parse_expr()?;
        self.expect_punct(";")?;
        Ok(StmtKind::Expr(Some(e)))
    }

    // ---- expressions -------------------------------------------------------------

    fn mk(&self, start: usize, kind: ExprKind) -> Expr {
        Expr { span: start..self.prev_end, kind }
    }

    pub(crate) fn parse_expr(&mut self) -> PResult<Expr> {
        let start = self.start();
        let first = self.parse_assign()?;
        if !self.at_punct(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_punct(",") {
            items.push(self.parse_assign()?);
        }
        Ok(self.mk(start, ExprKind::Comma(items)))
    }

    fn parse_assign(&mut self) -> PResult<Expr> {
        let start = self.start();
        let lhs = self.parse_ternary()?;
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Punctuator && is_assign_op(&t.text) {
                let op = t.text.clone();
                self.bump()?;
                let rhs = self.parse_assign()?;
                return Ok(self.mk(start, ExprKind::Assign { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }));
            }
        }
        Ok(lhs)
    }

    fn parse_ternary(&mut self) -> PResult<Expr> {
        let start = self.start();
        let cond = self.parse_binary(1)?;
        if !self.eat_punct("?") {
            return Ok(cond);
        }
        if self.at_punct(":") {
            return Err(ParseError);
        }
        let then = self.parse_expr()?;
        self.expect_punct(":")?;
        let els = self.parse_ternary()?;
        Ok(self.mk(start, ExprKind::Ternary { cond: Box::new(cond), then: Box::new(then), els: Box::new(els) }))
    }

    fn parse_binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let start = self.start();
        let mut lhs = self.parse_unary()?;
        while let Some(t) = self.peek() {
            if t.kind != TokenKind::Punctuator {
                break;
            }
            let Some(prec) = binary_precedence(&t.text) else { break };
            if prec < min_prec {
                break;
            }
            let op = t.text.clone();
            self.bump()?;
            let rhs = self.parse_binary(prec + 1)?;
            lhs = self.mk(start, ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) });
        }
        Ok(lhs)
    }

    fn is_type_name_start_at(&self, n: usize) -> bool {
        let Some(t) = self.peek_nth(n) else { return false };
        match t.kind {
            TokenKind::Keyword => {
                let k = t.text.as_str();
                TYPE_KEYWORDS.contains(&k)
                    || matches!(k, "struct" | "union" | "enum" | "const" | "volatile" | "restrict")
            }
            TokenKind::Identifier => {
                self.is_typedef_name(t)
                    || (t.text.ends_with("_t")
                        && self.peek_nth(n + 1).is_some_and(|x| x.is_punct(")") || x.is_punct("*")))
            }
            _ => false,
        }
    }

    fn parse_type_name(&mut self) -> PResult<Span> {
        let start = self.start();
        self.parse_decl_specifiers(true)?;
        let d = self.parse_declarator(true)?;
        if !d.decl.name.is_empty() {
            return Err(ParseError);
        }
        Ok(start..self.prev_end)
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        let start = self.start();
        let t = self.peek().ok_or(ParseError)?;
        if t.kind == TokenKind::Punctuator {
            match t.text.as_str() {
                "++" | "--" => {
                    let op = t.text.clone();
                    self.bump()?;
                    let operand = self.parse_unary()?;
                    return Ok(self.mk(start, ExprKind::Unary { op, operand: Box::new(operand) }));
                }
                "&" | "*" | "+" | "-" | "~" | "!" => {
                    let op = t.text.clone();
                    self.bump()?;
                    let operand = self.parse_unary()?;
                    return Ok(self.mk(start, ExprKind::Unary { op, operand: Box::new(operand) }));
                }
                "(" if self.is_type_name_start_at(1) => {
                    self.bump()?;
                    let ty = self.parse_type_name()?;
                    self.expect_punct(")")?;
                    if self.at_punct("{") {
                        let init = self.parse_initializer()?;
                        let lit = self.mk(start, ExprKind::CompoundLiteral { ty, init: Box::new(init) });
                        return self.parse_postfix(start, lit);
                    }
                    let operand = self.parse_unary()?;
                    return Ok(self.mk(start, ExprKind::Cast { ty, operand: Box::new(operand) }));
                }
                _ => {}
            }
        } else if t.is_keyword("sizeof") {
            self.bump()?;
            if self.at_punct("(") && self.is_type_name_start_at(1) {
                self.bump()?;
                self.parse_type_name()?;
                self.expect_punct(")")?;
                return Ok(self.mk(start, ExprKind::SizeofType));
            }
            let operand = self.parse_unary()?;
            return Ok(self.mk(start, ExprKind::Sizeof(Box::new(operand))));
        }
        let primary = self.parse_primary()?;
        self.parse_postfix(start, primary)
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let start = self.start();
        let t = self.peek().ok_or(ParseError)?;
        match t.kind {
            TokenKind::Identifier => {
                let (name, token) = self.expect_ident()?;
                Ok(self.mk(start, ExprKind::Ident { name, token }))
            }
            TokenKind::Literal => {
                let first_is_string = t.text.ends_with('"');
                self.bump()?;
                if first_is_string {
                    while self.peek().is_some_and(|t| t.kind == TokenKind::Literal && t.text.ends_with('"')) {
                        self.bump()?;
                    }
                }
                Ok(self.mk(start, ExprKind::Literal))
            }
            TokenKind::Punctuator if t.text == "(" => {
                self.bump()?;
                if self.at_punct("{") {
                    // GNU statement expression: out of subset.
                    return Err(ParseError);
                }
                let inner = self.parse_expr()?;
                self.expect_punct(")")?;
                Ok(self.mk(start, ExprKind::Paren(Box::new(inner))))
            }
            _ => Err(ParseError),
        }
    }

    fn parse_postfix(&mut self, start: usize, mut e: Expr) -> PResult<Expr> {
        loop {
            if self.at_punct("(") {
                self.bump()?;
                let mut args = Vec::new();
                if !self.at_punct(")") {
                    loop {
                        if self.is_type_name_start_at(0) {
                            // Macro arguments such as va_arg(ap, int).
                            let arg_start = self.start();
                            self.parse_type_name()?;
                            args.push(self.mk(arg_start, ExprKind::SizeofType));
                        } else {
                            args.push(self.parse_assign()?);
                        }
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                }
                self.expect_punct(")")?;
                e = self.mk(start, ExprKind::Call { callee: Box::new(e), args });
            } else if self.at_punct("[") {
                self.bump()?;
                let index = self.parse_expr()?;
                self.expect_punct("]")?;
                e = self.mk(start, ExprKind::Index { base: Box::new(e), index: Box::new(index) });
            } else if self.at_punct(".") || self.at_punct("->") {
                let arrow = self.at_punct("->");
                self.bump()?;
                let (field, field_token) = self.expect_ident()?;
                e = self.mk(start, ExprKind::Member { base: Box::new(e), field, field_token, arrow });
            } else if self.at_punct("++") || self.at_punct("--") {
                let op = self.peek().unwrap().text.clone();
                self.bump()?;
                e = self.mk(start, ExprKind::PostIncDec { op, operand: Box::new(e) });
            } else {
                return Ok(e);
            }
        }
    }
}

struct DeclaratorInfo {
    decl: Declarator,
    variadic: bool,
}

impl DeclaratorInfo {
    fn named(name: String, name_token: usize) -> Self {
        DeclaratorInfo {
            decl: Declarator { name, name_token, span: 0..0, init: None, is_function: false, params: vec![] },
            variadic: false,
        }
    }
}

fn make_struct(agg: AggInfo, is_typedef: bool, declarators: Vec<Declarator>) -> StructDef {
    StructDef {
        aggregate: agg.aggregate,
        tag: agg.tag,
        tag_token: agg.tag_token,
        members: agg.members,
        enumerators: agg.enumerators,
        is_typedef,
        declarators,
        body: agg.body.unwrap_or(0..0),
    }
}

/// Parse a `#define` directive line.
pub fn parse_define(text: &str) -> Option<MacroDef> {
    let rest = text.trim_start().strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix("define")?;
    if !rest.starts_with([' ', '\t']) {
        return None;
    }
    let rest = rest.trim_start();
    let name_len = rest
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
        .map(|(i, _)| i)
        .unwrap_or(rest.len());
    if name_len == 0 {
        return None;
    }
    let name = rest[..name_len].to_string();
    let after = &rest[name_len..];
    let (params, body) = if let Some(p) = after.strip_prefix('(') {
        let close = p.find(')')?;
        let params = p[..close]
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        (Some(params), p[close + 1..].trim().to_string())
    } else {
        (None, after.trim().to_string())
    };
    Some(MacroDef { name, params, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::lexer::lex;

    fn p(src: &str) -> SourceUnit {
        parse(lex(src).unwrap())
    }

    #[test]
    fn single_function() {
        let u = p("int f(void){return 1;}");
        assert_eq!(u.decls.len(), 1);
        let (_, f) = u.function("f").unwrap();
        assert!(f.params.is_empty());
        assert!(!f.is_variadic);
        assert_eq!(u.text(&f.signature), "int f(void)");
    }

    #[test]
    fn struct_with_member() {
        let u = p("struct s { int a; };");
        match &u.decls[0].node {
            Node::Struct(s) => {
                assert_eq!(s.tag.as_deref(), Some("s"));
                assert_eq!(s.members.iter().map(|m| m.name.as_str()).collect::<Vec<_>>(), vec!["a"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn asm_is_opaque() {
        let u = p("__asm__(\"nop\");\nint x;");
        assert!(matches!(u.decls[0].node, Node::Opaque));
        assert_eq!(u.text(&u.decls[0].span), "__asm__(\"nop\");");
        assert!(matches!(u.decls[1].node, Node::GlobalVar(_)));
        assert!(!u.fully_opaque());
    }

    #[test]
    fn fully_opaque_flagged() {
        assert!(p("@@@ ;").fully_opaque());
    }

    #[test]
    fn classifies_top_level_kinds() {
        let src = "#include <stdio.h>\n#define LIMIT 10\ntypedef unsigned long ulong;\nint add(int a, int b);\nstatic int counter = 0;\ntypedef struct cfg { int scale; } cfg_t;\nenum color { RED, GREEN = 3 };\nint main(void) { return 0; }\n";
        let u = p(src);
        let kinds: Vec<_> = u.decls.iter().map(|d| d.node.kind_name()).collect();
        assert_eq!(
            kinds,
            vec!["directive", "macro", "declaration", "declaration", "global", "struct", "struct", "function"]
        );
        match &u.decls[6].node {
            Node::Struct(s) => assert_eq!(s.enumerators.len(), 2),
            _ => unreachable!(),
        }
        assert!(declared_typedefs(&u).contains("cfg_t"));
    }

    #[test]
    fn variadic_and_static() {
        let u = p("static int logf_(const char *fmt, ...) { return 0; }");
        let (_, f) = u.function("logf_").unwrap();
        assert!(f.is_variadic && f.is_static);
        assert_eq!(f.params[0].name.as_deref(), Some("fmt"));
    }

    #[test]
    fn function_pointer_param_is_not_a_function() {
        let u = p("int apply(int (*op)(int, int), int a) { return op(a, a); }");
        let (_, f) = u.function("apply").unwrap();
        assert_eq!(f.params.len(), 2);
        assert_eq!(f.params[0].name.as_deref(), Some("op"));
        let u = p("int (*table)(int);");
        assert!(matches!(u.decls[0].node, Node::GlobalVar(_)));
    }

    #[test]
    fn statements_parse() {
        let src = "int f(int n) {\n  int s = 0, i;\n  for (i = 0; i < n; i++) s += i;\n  while (n > 0) { n--; }\n  do { s++; } while (s < 3);\n  switch (n) { case 1: s = 2; break; default: break; }\n  if (s) goto out; else s = -s;\nout:\n  return s ? s : (int)sizeof(int);\n}";
        let u = p(src);
        let (_, f) = u.function("f").unwrap();
        let items = f.body.compound_items().unwrap();
        assert_eq!(items.len(), 7);
        assert!(items.iter().all(|s| !matches!(s.kind, StmtKind::Opaque)), "{items:#?}");
        assert!(matches!(items[1].kind, StmtKind::For { .. }));
        assert!(matches!(items[6].kind, StmtKind::Labeled { .. }));
    }

    #[test]
    fn unparseable_statement_degrades() {
        let u = p("int f(void) { int x = ({ 1; }); return x; }");
        let (_, f) = u.function("f").unwrap();
        let items = f.body.compound_items().unwrap();
        assert!(matches!(items[0].kind, StmtKind::Opaque));
        assert!(matches!(items[1].kind, StmtKind::Return(_)));
    }

    #[test]
    fn typedef_names_drive_declarations_and_casts() {
        let u = p("typedef int myint;\nint g(void) { myint a = (myint)3; myint *p = &a; return *p; }");
        let (_, f) = u.function("g").unwrap();
        let items = f.body.compound_items().unwrap();
        assert!(matches!(items[0].kind, StmtKind::Decl(_)));
        assert!(matches!(items[1].kind, StmtKind::Decl(_)));
    }

    #[test]
    fn define_parsing() {
        let m = parse_define("#define MAX(a, b) ((a) > (b) ? (a) : (b))").unwrap();
        assert_eq!(m.name, "MAX");
        assert_eq!(m.params, Some(vec!["a".into(), "b".into()]));
        let m = parse_define("# define LIMIT 100").unwrap();
        assert_eq!((m.name.as_str(), m.params.is_none(), m.body.as_str()), ("LIMIT", true, "100"));
        assert!(parse_define("#include <x.h>").is_none());
    }

    #[test]
    fn every_token_owned_once() {
        let src = "/* head */\n#define A 1\nint x;\n\nint f(void) { return A; } // tail\n";
        let u = p(src);
        let mut owned = vec![0u8; u.tokens.len()];
        for d in &u.decls {
            for i in d.span.clone() {
                owned[i] += 1;
            }
        }
        for g in &u.gaps {
            for i in g.clone() {
                owned[i] += 1;
            }
        }
        assert!(owned.iter().all(|&c| c == 1), "{owned:?}");
    }
}

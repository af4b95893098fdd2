//! Syntax tree for the supported C subset.
//!
//! Nodes do not own text; they carry token-index spans into the owning
//! [`SourceUnit`]. Rewrites are expressed as span replacements (see
//! [`super::rewrite`]) and the result is re-lexed.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::lexer::{Token, TokenKind};

/// Half-open range of token indices.
pub type Span = Range<usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceUnit {
    pub path: String,
    pub tokens: Vec<Token>,
    pub decls: Vec<TopLevel>,
    /// Token ranges between top-level nodes (whitespace and comments only).
    pub gaps: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopLevel {
    pub span: Span,
    pub node: Node,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Function(FunctionDef),
    Declaration(Declaration),
    GlobalVar(GlobalVar),
    Struct(StructDef),
    Macro(MacroDef),
    /// Preprocessor line other than `#define` (`#include`, `#if`, ...).
    Directive,
    Opaque,
}

impl Node {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Node::Function(_) => "function",
            Node::Declaration(_) => "declaration",
            Node::GlobalVar(_) => "global",
            Node::Struct(_) => "struct",
            Node::Macro(_) => "macro",
            Node::Directive => "directive",
            Node::Opaque => "opaque",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: Option<String>,
    pub name_token: Option<usize>,
    /// Full parameter declaration tokens.
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub name_token: usize,
    /// From the first specifier up to (not including) the body's `{`, trimmed.
    pub signature: Span,
    /// Declaration specifiers preceding the declarator (return type, storage class).
    pub specifiers: Span,
    pub params: Vec<Param>,
    pub body: Stmt,
    pub is_variadic: bool,
    pub is_static: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeclarationKind {
    Prototype { name: String, name_token: usize, is_static: bool },
    Typedef,
    /// Forward declarations such as `struct foo;`.
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declaration {
    pub kind: DeclarationKind,
    pub declarators: Vec<Declarator>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalVar {
    pub declarators: Vec<Declarator>,
    pub is_extern: bool,
    pub is_static: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declarator {
    pub name: String,
    pub name_token: usize,
    pub span: Span,
    pub init: Option<Expr>,
    /// Declarator is a function (prototype) rather than an object.
    pub is_function: bool,
    pub params: Vec<Param>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Struct,
    Union,
    Enum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub name: String,
    pub name_token: usize,
    /// Type identifiers mentioned in the member declaration (typedef names, tags).
    pub type_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructDef {
    pub aggregate: Aggregate,
    pub tag: Option<String>,
    pub tag_token: Option<usize>,
    pub members: Vec<Member>,
    pub enumerators: Vec<(String, usize)>,
    pub is_typedef: bool,
    /// Names introduced after the closing brace (typedef names or variables).
    pub declarators: Vec<Declarator>,
    pub body: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroDef {
    pub name: String,
    pub params: Option<Vec<String>>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub span: Span,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Compound(Vec<Stmt>),
    Decl(LocalDecl),
    Expr(Option<Expr>),
    If { cond: Expr, then: Box<Stmt>, els: Option<Box<Stmt>> },
    While { cond: Expr, body: Box<Stmt> },
    DoWhile { body: Box<Stmt>, cond: Expr },
    For { init: ForInit, cond: Option<Expr>, step: Option<Expr>, body: Box<Stmt> },
    Switch { cond: Expr, body: Box<Stmt> },
    Case { value: Expr, body: Box<Stmt> },
    Default { body: Box<Stmt> },
    Labeled { label: String, label_token: usize, body: Box<Stmt> },
    Return(Option<Expr>),
    Break,
    Continue,
    Goto { label: String, label_token: usize },
    /// Statement the subset grammar could not handle; carried verbatim.
    Opaque,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalDecl {
    /// Declaration specifier tokens (type, storage class, qualifiers).
    pub specifiers: Span,
    pub declarators: Vec<Declarator>,
    pub is_static: bool,
    pub is_typedef: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForInit {
    None,
    Expr(Expr),
    Decl(LocalDecl),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub span: Span,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Ident { name: String, token: usize },
    Literal,
    Paren(Box<Expr>),
    Call { callee: Box<Expr>, args: Vec<Expr> },
    Index { base: Box<Expr>, index: Box<Expr> },
    Member { base: Box<Expr>, field: String, field_token: usize, arrow: bool },
    PostIncDec { op: String, operand: Box<Expr> },
    Unary { op: String, operand: Box<Expr> },
    SizeofType,
    Sizeof(Box<Expr>),
    Cast { ty: Span, operand: Box<Expr> },
    CompoundLiteral { ty: Span, init: Box<Expr> },
    Binary { op: String, lhs: Box<Expr>, rhs: Box<Expr> },
    Assign { op: String, lhs: Box<Expr>, rhs: Box<Expr> },
    Ternary { cond: Box<Expr>, then: Box<Expr>, els: Box<Expr> },
    Comma(Vec<Expr>),
    InitList(Vec<Expr>),
    /// `.field = value` or `[index] = value` inside an initializer list.
    Designated { designators: Span, value: Box<Expr> },
}

impl Expr {
    /// Visit this expression and all sub-expressions, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Ident { .. } | ExprKind::Literal | ExprKind::SizeofType => {}
            ExprKind::Paren(e)
            | ExprKind::PostIncDec { operand: e, .. }
            | ExprKind::Unary { operand: e, .. }
            | ExprKind::Sizeof(e)
            | ExprKind::Cast { operand: e, .. }
            | ExprKind::CompoundLiteral { init: e, .. }
            | ExprKind::Member { base: e, .. }
            | ExprKind::Designated { value: e, .. } => e.walk(f),
            ExprKind::Call { callee, args } => {
                callee.walk(f);
                args.iter().for_each(|a| a.walk(f));
            }
            ExprKind::Index { base, index } => {
                base.walk(f);
                index.walk(f);
            }
            ExprKind::Binary { lhs, rhs, .. } | ExprKind::Assign { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Ternary { cond, then, els } => {
                cond.walk(f);
                then.walk(f);
                els.walk(f);
            }
            ExprKind::Comma(items) | ExprKind::InitList(items) => items.iter().for_each(|e| e.walk(f)),
        }
    }

    /// Strip redundant parentheses.
    pub fn unparen(&self) -> &Expr {
        match &self.kind {
            ExprKind::Paren(inner) => inner.unparen(),
            _ => self,
        }
    }

    pub fn as_ident(&self) -> Option<&str> {
        match &self.unparen().kind {
            ExprKind::Ident { name, .. } => Some(name),
            _ => None,
        }
    }
}

impl Stmt {
    /// Visit this statement and all nested statements, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::Compound(items) => items.iter().for_each(|s| s.walk(f)),
            StmtKind::If { then, els, .. } => {
                then.walk(f);
                if let Some(e) = els {
                    e.walk(f);
                }
            }
            StmtKind::While { body, .. }
            | StmtKind::DoWhile { body, .. }
            | StmtKind::For { body, .. }
            | StmtKind::Switch { body, .. }
            | StmtKind::Case { body, .. }
            | StmtKind::Default { body }
            | StmtKind::Labeled { body, .. } => body.walk(f),
            _ => {}
        }
    }

    /// Expressions directly owned by this statement (not by nested statements).
    pub fn own_exprs(&self) -> Vec<&Expr> {
        fn push_decl<'a>(d: &'a LocalDecl, out: &mut Vec<&'a Expr>) {
            out.extend(d.declarators.iter().filter_map(|decl| decl.init.as_ref()));
        }
        let mut out = Vec::new();
        match &self.kind {
            StmtKind::Decl(d) => push_decl(d, &mut out),
            StmtKind::Expr(Some(e)) | StmtKind::Return(Some(e)) => out.push(e),
            StmtKind::If { cond, .. }
            | StmtKind::While { cond, .. }
            | StmtKind::DoWhile { cond, .. }
            | StmtKind::Switch { cond, .. } => out.push(cond),
            StmtKind::Case { value, .. } => out.push(value),
            StmtKind::For { init, cond, step, .. } => {
                match init {
                    ForInit::Expr(e) => out.push(e),
                    ForInit::Decl(d) => push_decl(d, &mut out),
                    ForInit::None => {}
                }
                out.extend(cond.iter());
                out.extend(step.iter());
            }
            _ => {}
        }
        out
    }

    /// Visit every expression in this statement tree.
    pub fn walk_exprs<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        self.walk(&mut |s| {
            for e in s.own_exprs() {
                e.walk(f);
            }
        });
    }

    pub fn compound_items(&self) -> Option<&[Stmt]> {
        match &self.kind {
            StmtKind::Compound(items) => Some(items),
            _ => None,
        }
    }
}

impl SourceUnit {
    pub fn text(&self, span: &Span) -> String {
        self.tokens[span.clone()].iter().map(|t| t.text.as_str()).collect()
    }

    pub fn functions(&self) -> impl Iterator<Item = (&TopLevel, &FunctionDef)> {
        self.decls.iter().filter_map(|d| match &d.node {
            Node::Function(f) => Some((d, f)),
            _ => None,
        })
    }

    pub fn function(&self, name: &str) -> Option<(&TopLevel, &FunctionDef)> {
        self.functions().find(|(_, f)| f.name == name)
    }

    /// True when nothing in the unit parsed (every node is opaque).
    pub fn fully_opaque(&self) -> bool {
        !self.decls.is_empty() && self.decls.iter().all(|d| matches!(d.node, Node::Opaque))
    }

    /// Indices of non-trivia tokens within `span`.
    pub fn significant(&self, span: &Span) -> impl Iterator<Item = usize> + '_ {
        span.clone().filter(|&i| !self.tokens[i].is_trivia())
    }

    /// Identifier texts occurring in `span`.
    pub fn identifiers_in(&self, span: &Span) -> Vec<&str> {
        self.tokens[span.clone()]
            .iter()
            .filter(|t| t.kind == TokenKind::Identifier)
            .map(|t| t.text.as_str())
            .collect()
    }

    /// Comment tokens directly preceding `start` (only whitespace in between).
    pub fn leading_comment(&self, start: usize) -> Option<Span> {
        let mut i = start;
        let mut first = None;
        let mut last = None;
        while i > 0 {
            let t = &self.tokens[i - 1];
            match t.kind {
                TokenKind::Comment => {
                    first = Some(i - 1);
                    last.get_or_insert(i);
                    i -= 1;
                }
                TokenKind::Whitespace if t.text.matches('\n').count() <= 1 => i -= 1,
                _ => break,
            }
        }
        Some(first?..last?)
    }
}

//! Semantics-preserving rewrite templates.
//!
//! Each template has a structural pattern, an applicability predicate and a
//! production. Occurrences are numbered in source order among the matches
//! that satisfy the predicate.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::inline::{line_indent, side_effect_free, ParsedFunction};
use super::ObfuscateError;
use crate::cfront::ast::*;
use crate::cfront::rewrite::Rewriter;
use crate::cfront::symbols::{resolve_symbols, Resolution, SymbolTable};
use crate::corpus::{BenchmarkCase, ObfuscationRecord, Scenario, Strategy};
use crate::harness::{mask_with_count, top_level_statements};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SemanticTemplate {
    /// `for` loop to `while` with hoisted init and trailing step.
    T1,
    /// `x op= e` to `x = x op (e)`.
    T2,
    /// Statement-level ternary to `if`/`else`.
    T3,
    /// De Morgan on `!(a && b)` and `!(a || b)`.
    T4,
    /// `if`/`else if` chain of `v == C` guards to `switch`.
    T5,
}

impl SemanticTemplate {
    pub const ALL: [SemanticTemplate; 5] =
        [SemanticTemplate::T1, SemanticTemplate::T2, SemanticTemplate::T3, SemanticTemplate::T4, SemanticTemplate::T5];

    pub fn id(self) -> &'static str {
        match self {
            SemanticTemplate::T1 => "T1",
            SemanticTemplate::T2 => "T2",
            SemanticTemplate::T3 => "T3",
            SemanticTemplate::T4 => "T4",
            SemanticTemplate::T5 => "T5",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            SemanticTemplate::T1 => "for loop rewritten as while loop",
            SemanticTemplate::T2 => "compound assignment expanded",
            SemanticTemplate::T3 => "ternary rewritten as if/else",
            SemanticTemplate::T4 => "negated conjunction/disjunction distributed",
            SemanticTemplate::T5 => "equality chain rewritten as switch",
        }
    }
}

impl fmt::Display for SemanticTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SemanticTemplate {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SemanticTemplate::ALL
            .into_iter()
            .find(|t| t.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown template `{s}`"))
    }
}

/// One applicable rewrite: replace `span` by `text`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateMatch {
    pub span: Span,
    pub text: String,
}

struct Ctx<'a> {
    unit: &'a SourceUnit,
    symbols: SymbolTable,
}

impl Ctx<'_> {
    fn text(&self, span: &Span) -> String {
        self.unit.text(span)
    }

    /// Text with whitespace and comments collapsed, for structural comparison.
    fn norm(&self, span: &Span) -> String {
        self.unit.significant(span).map(|i| self.unit.tokens[i].text.as_str()).collect::<Vec<_>>().join(" ")
    }

    fn indent(&self, s: &Stmt) -> String {
        line_indent(self.unit, s.span.start)
    }
}

/// Statements in pre-order, each with whether it sits directly in a block.
fn statements(body: &Stmt) -> Vec<(&Stmt, bool)> {
    fn go<'a>(s: &'a Stmt, block_item: bool, out: &mut Vec<(&'a Stmt, bool)>) {
        out.push((s, block_item));
        match &s.kind {
            StmtKind::Compound(items) => items.iter().for_each(|i| go(i, true, out)),
            StmtKind::If { then, els, .. } => {
                go(then, false, out);
                if let Some(e) = els {
                    go(e, false, out);
                }
            }
            StmtKind::While { body, .. }
            | StmtKind::DoWhile { body, .. }
            | StmtKind::For { body, .. }
            | StmtKind::Switch { body, .. }
            | StmtKind::Case { body, .. }
            | StmtKind::Default { body }
            | StmtKind::Labeled { body, .. } => go(body, false, out),
            _ => {}
        }
    }
    let mut out = Vec::new();
    go(body, false, &mut out);
    out
}

/// True when `s` contains a statement matching `pred` that is not nested in
/// a construct for which `stop` holds.
fn contains_unnested(s: &Stmt, pred: &dyn Fn(&StmtKind) -> bool, stop: &dyn Fn(&StmtKind) -> bool) -> bool {
    if pred(&s.kind) {
        return true;
    }
    if stop(&s.kind) {
        return false;
    }
    let children: Vec<&Stmt> = match &s.kind {
        StmtKind::Compound(items) => items.iter().collect(),
        StmtKind::If { then, els, .. } => std::iter::once(then.as_ref()).chain(els.as_deref()).collect(),
        StmtKind::While { body, .. }
        | StmtKind::DoWhile { body, .. }
        | StmtKind::For { body, .. }
        | StmtKind::Switch { body, .. }
        | StmtKind::Case { body, .. }
        | StmtKind::Default { body }
        | StmtKind::Labeled { body, .. } => vec![body],
        _ => vec![],
    };
    children.into_iter().any(|c| contains_unnested(c, pred, stop))
}

fn is_loop(k: &StmtKind) -> bool {
    matches!(k, StmtKind::While { .. } | StmtKind::DoWhile { .. } | StmtKind::For { .. })
}

fn wrap_block(text: &str, indent: &str) -> String {
    format!("{{\n{indent}    {}\n{indent}}}", shift(text, "    "))
}

/// Add `extra` to the indentation of every line after the first.
fn shift(text: &str, extra: &str) -> String {
    text.split('\n')
        .enumerate()
        .map(|(k, l)| if k == 0 || l.trim().is_empty() { l.to_string() } else { format!("{extra}{l}") })
        .collect::<Vec<_>>()
        .join("\n")
}

fn t1(cx: &Ctx, s: &Stmt, block_item: bool) -> Option<Result<TemplateMatch, String>> {
    let StmtKind::For { init, cond, step, body } = &s.kind else { return None };
    let u = cx.unit;
    if contains_unnested(body, &|k| matches!(k, StmtKind::Continue), &is_loop) {
        return Some(Err("loop body uses continue".into()));
    }
    let open = s.span.clone().find(|&i| u.tokens[i].is_punct("("))?;
    let mut depth = 0i32;
    let semi = (open + 1..s.span.end).find(|&i| {
        let t = &u.tokens[i];
        if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
            depth += 1;
        } else if t.is_punct(")") || t.is_punct("]") || t.is_punct("}") {
            depth -= 1;
        }
        depth == 0 && t.is_punct(";")
    })?;
    let init_text = cx.text(&(open + 1..semi + 1)).trim().to_string();
    let init_text = (init_text != ";").then_some(init_text);
    let cond_text = cond.as_ref().map_or_else(|| "1".to_string(), |c| cx.text(&c.span));
    let step_text = step.as_ref().map(|e| format!("{};", cx.text(&e.span)));
    let indent = cx.indent(s);
    let inner = format!("{indent}    ");

    let mut loop_body = String::new();
    match &body.kind {
        StmtKind::Compound(items) => {
            let step_names: BTreeSet<&str> =
                step.as_ref().map(|e| u.identifiers_in(&e.span).into_iter().collect()).unwrap_or_default();
            let shadows = items.iter().any(|i| match &i.kind {
                StmtKind::Decl(d) => d.declarators.iter().any(|x| step_names.contains(x.name.as_str())),
                _ => false,
            });
            if shadows {
                loop_body.push_str(&format!("\n{inner}{}", shift(&cx.text(&body.span), "    ")));
            } else {
                let inside = cx.text(&(body.span.start + 1..body.span.end - 1));
                let inside = inside.trim_end();
                if inside.contains('\n') {
                    loop_body.push_str(inside);
                } else if !inside.trim().is_empty() {
                    loop_body.push_str(&format!("\n{inner}{}", inside.trim()));
                }
            }
        }
        _ => loop_body.push_str(&format!("\n{inner}{}", cx.text(&body.span).trim())),
    }
    if let Some(st) = &step_text {
        loop_body.push_str(&format!("\n{inner}{st}"));
    }
    let while_text = format!("while ({cond_text}) {{{loop_body}\n{indent}}}");
    let text = match (&init_text, init) {
        (None, _) => while_text,
        (Some(i), ForInit::Expr(_)) if block_item => format!("{i}\n{indent}{while_text}"),
        (Some(i), _) => format!("{{\n{inner}{i}\n{inner}{}\n{indent}}}", shift(&while_text, "    ")),
    };
    Some(Ok(TemplateMatch { span: s.span.clone(), text }))
}

const COMPOUND_OPS: &[&str] = &["+=", "-=", "*=", "/=", "%=", "<<=", ">>=", "&=", "^=", "|="];

fn t2(cx: &Ctx, body: &Stmt) -> Vec<Result<TemplateMatch, String>> {
    let mut statement_level = HashSet::new();
    body.walk(&mut |s| {
        if let StmtKind::Expr(Some(e)) = &s.kind {
            statement_level.insert(e.span.clone());
        }
    });
    let mut out = Vec::new();
    body.walk_exprs(&mut |e| {
        let ExprKind::Assign { op, lhs, rhs } = &e.kind else { return };
        if !COMPOUND_OPS.contains(&op.as_str()) {
            return;
        }
        if !side_effect_free(lhs) {
            out.push(Err("assignment target has side effects".into()));
            return;
        }
        let l = cx.text(&lhs.span);
        let bin = &op[..op.len() - 1];
        let mut text = format!("{} = {} {bin} ({})", l.trim(), l.trim(), cx.text(&rhs.span).trim());
        if !statement_level.contains(&e.span) {
            text = format!("({text})");
        }
        out.push(Ok(TemplateMatch { span: e.span.clone(), text }));
    });
    out
}

/// Type class of an expression built only from literals, if obvious.
fn literal_class(cx: &Ctx, e: &Expr) -> Option<&'static str> {
    match &e.kind {
        ExprKind::Paren(x) => literal_class(cx, x),
        ExprKind::Unary { op, operand } if op == "-" || op == "+" => {
            literal_class(cx, operand).filter(|c| *c == "int" || *c == "double")
        }
        ExprKind::Ternary { then, els, .. } => {
            let c = literal_class(cx, then)?;
            (literal_class(cx, els)? == c).then_some(c)
        }
        ExprKind::Literal => {
            let t = cx.text(&e.span);
            let t = t.trim();
            if t.starts_with('"') {
                Some("string")
            } else if t.starts_with('\'') {
                Some("int")
            } else if t.bytes().all(|b| b.is_ascii_digit()) {
                t.parse::<i64>().ok().filter(|v| *v <= i32::MAX as i64).map(|_| "int")
            } else if t.bytes().all(|b| b.is_ascii_digit() || b == b'.') || (t.contains(['e', 'E']) && !t.starts_with("0x")) {
                t.bytes().all(|b| b.is_ascii_digit() || b".eE+-".contains(&b)).then_some("double")
            } else {
                None
            }
        }
        _ => None,
    }
}

fn branch_text(cx: &Ctx, e: &Expr) -> String {
    match e.kind {
        ExprKind::Comma(_) | ExprKind::Assign { .. } => format!("({})", cx.text(&e.span).trim()),
        _ => cx.text(&e.span).trim().to_string(),
    }
}

fn t3(cx: &Ctx, s: &Stmt, block_item: bool) -> Option<Result<TemplateMatch, String>> {
    enum Shape<'e> {
        Assign(&'e Expr),
        Return,
        Discard,
    }
    let (shape, tern) = match &s.kind {
        StmtKind::Expr(Some(e)) => match &e.unparen().kind {
            ExprKind::Assign { op, lhs, rhs } if op == "=" && matches!(rhs.unparen().kind, ExprKind::Ternary { .. }) => {
                (Shape::Assign(lhs), rhs.unparen())
            }
            ExprKind::Ternary { .. } => (Shape::Discard, e.unparen()),
            _ => return None,
        },
        StmtKind::Return(Some(e)) if matches!(e.unparen().kind, ExprKind::Ternary { .. }) => (Shape::Return, e.unparen()),
        _ => return None,
    };
    let ExprKind::Ternary { cond, then, els } = &tern.kind else { return None };
    if let Shape::Assign(lhs) = shape {
        if !side_effect_free(lhs) {
            return Some(Err("assignment target has side effects".into()));
        }
    }
    if !matches!(shape, Shape::Discard) {
        match (literal_class(cx, then), literal_class(cx, els)) {
            (Some(a), Some(b)) if a == b => {}
            _ => return Some(Err("branch types are not evidently identical".into())),
        }
    }
    let (a, b) = (branch_text(cx, then), branch_text(cx, els));
    let (a, b) = match shape {
        Shape::Assign(lhs) => {
            let l = cx.text(&lhs.span);
            (format!("{} = {a};", l.trim()), format!("{} = {b};", l.trim()))
        }
        Shape::Return => (format!("return {a};"), format!("return {b};")),
        Shape::Discard => (format!("{a};"), format!("{b};")),
    };
    let indent = cx.indent(s);
    let text = format!("if ({})\n{indent}    {a}\n{indent}else\n{indent}    {b}", cx.text(&cond.span).trim());
    let text = if block_item { text } else { wrap_block(&text, &indent) };
    Some(Ok(TemplateMatch { span: s.span.clone(), text }))
}

fn t4(cx: &Ctx, body: &Stmt) -> Vec<Result<TemplateMatch, String>> {
    let mut out = Vec::new();
    body.walk_exprs(&mut |e| {
        let ExprKind::Unary { op, operand } = &e.kind else { return };
        if op != "!" {
            return;
        }
        let ExprKind::Binary { op: bop, lhs, rhs } = &operand.unparen().kind else { return };
        let flipped = match bop.as_str() {
            "&&" => "||",
            "||" => "&&",
            _ => return,
        };
        let text = format!("(!({}) {flipped} !({}))", cx.text(&lhs.span).trim(), cx.text(&rhs.span).trim());
        out.push(Ok(TemplateMatch { span: e.span.clone(), text }));
    });
    out
}

/// A `case` label candidate: integer/character literal or a file-scope name.
fn is_case_constant(cx: &Ctx, e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Paren(x) => is_case_constant(cx, x),
        ExprKind::Unary { op, operand } if op == "-" || op == "+" => is_case_constant(cx, operand),
        ExprKind::Literal => {
            let t = cx.text(&e.span);
            let t = t.trim();
            t.starts_with('\'') || (t.as_bytes()[0].is_ascii_digit() && !t.contains('.') && !(t.contains(['e', 'E']) && !t.starts_with("0x")))
        }
        ExprKind::Ident { token, .. } => !matches!(cx.symbols.resolution(*token), Some(Resolution::Symbol { frame, .. }) if frame != 0),
        _ => false,
    }
}

fn t5(cx: &Ctx, s: &Stmt) -> Option<Result<TemplateMatch, String>> {
    let StmtKind::If { .. } = &s.kind else { return None };
    let mut guards: Vec<(String, &Stmt)> = Vec::new();
    let mut scrutinee: Option<(String, Span)> = None;
    let mut default: Option<&Stmt> = None;
    let mut cur = s;
    loop {
        let StmtKind::If { cond, then, els } = &cur.kind else {
            default = Some(cur);
            break;
        };
        let guard = match &cond.unparen().kind {
            ExprKind::Binary { op, lhs, rhs } if op == "==" => {
                if is_case_constant(cx, rhs) && side_effect_free(lhs) {
                    Some((lhs, rhs))
                } else if is_case_constant(cx, lhs) && side_effect_free(rhs) {
                    Some((rhs, lhs))
                } else {
                    None
                }
            }
            _ => None,
        };
        let same = |v: &Expr| scrutinee.as_ref().is_none_or(|(n, _)| *n == cx.norm(&v.span));
        match guard {
            Some((v, c)) if same(v) => {
                scrutinee.get_or_insert_with(|| (cx.norm(&v.span), v.span.clone()));
                guards.push((cx.norm(&c.span), then));
            }
            _ if guards.is_empty() => return None,
            _ => {
                default = Some(cur);
                break;
            }
        }
        match els {
            Some(e) => cur = e,
            None => break,
        }
    }
    if guards.len() < 2 {
        return None;
    }
    let constants: BTreeSet<&str> = guards.iter().map(|(c, _)| c.as_str()).collect();
    if constants.len() != guards.len() {
        return Some(Err("duplicate guard constants".into()));
    }
    let branches = guards.iter().map(|(_, b)| *b).chain(default);
    for b in branches.clone() {
        let escapes = contains_unnested(
            b,
            &|k| matches!(k, StmtKind::Break | StmtKind::Case { .. } | StmtKind::Default { .. }),
            &|k| is_loop(k) || matches!(k, StmtKind::Switch { .. }),
        );
        if escapes {
            return Some(Err("branch contains break or case labels".into()));
        }
    }
    let indent = cx.indent(s);
    let inner = format!("{indent}    ");
    let (_, scrut_span) = scrutinee?;
    let mut text = format!("switch ({}) {{", cx.text(&scrut_span).trim());
    for (c, b) in &guards {
        text.push_str(&format!("\n{indent}case {c}:\n{inner}{}\n{inner}break;", branch_stmt(cx, b)));
    }
    if let Some(d) = default {
        text.push_str(&format!("\n{indent}default:\n{inner}{}\n{inner}break;", branch_stmt(cx, d)));
    }
    text.push_str(&format!("\n{indent}}}"));
    Some(Ok(TemplateMatch { span: s.span.clone(), text }))
}

fn branch_stmt(cx: &Ctx, b: &Stmt) -> String {
    let t = cx.text(&b.span);
    match b.kind {
        StmtKind::Compound(_) => shift(t.trim(), "    "),
        _ => t.trim().to_string(),
    }
}

/// Every match of `template` in `f`, in source order; `Err` entries are
/// pattern matches that fail the applicability predicate.
pub fn template_matches(f: &ParsedFunction, template: SemanticTemplate) -> Vec<Result<TemplateMatch, String>> {
    let cx = Ctx { unit: &f.unit, symbols: resolve_symbols(&f.unit, &[]) };
    let body = &f.def().body;
    let mut out: Vec<Result<TemplateMatch, String>> = match template {
        SemanticTemplate::T2 => t2(&cx, body),
        SemanticTemplate::T4 => t4(&cx, body),
        _ => statements(body)
            .into_iter()
            .filter_map(|(s, block_item)| match template {
                SemanticTemplate::T1 => t1(&cx, s, block_item),
                SemanticTemplate::T3 => t3(&cx, s, block_item),
                _ => t5(&cx, s),
            })
            .collect(),
    };
    out.sort_by_key(|m| m.as_ref().map(|m| m.span.start).unwrap_or(usize::MAX));
    out
}

fn not_applicable(t: SemanticTemplate, reason: impl Into<String>) -> ObfuscateError {
    ObfuscateError::NotApplicable { what: t.id().into(), reason: reason.into() }
}

fn applicable_within(f: &ParsedFunction, t: SemanticTemplate, limit: Option<&Span>) -> Result<Vec<TemplateMatch>, ObfuscateError> {
    let all = template_matches(f, t);
    let mut first_reason = None;
    let mut ok = Vec::new();
    for m in all {
        match m {
            Ok(m) if limit.is_none_or(|l| m.span.start >= l.start && m.span.end <= l.end) => ok.push(m),
            Ok(_) => {
                first_reason.get_or_insert_with(|| "match lies outside the kept prefix".to_string());
            }
            Err(r) => {
                first_reason.get_or_insert(r);
            }
        }
    }
    if ok.is_empty() {
        let what = match t {
            SemanticTemplate::T1 => "no for loop",
            SemanticTemplate::T2 => "no compound assignment",
            SemanticTemplate::T3 => "no statement-level ternary",
            SemanticTemplate::T4 => "no negated && or ||",
            SemanticTemplate::T5 => "no if/else-if equality chain",
        };
        return Err(not_applicable(t, first_reason.unwrap_or_else(|| what.to_string())));
    }
    Ok(ok)
}

/// Apply `template` at its `occurrence`-th applicable match and return the
/// rewritten function text.
pub fn apply_semantic_template(
    f: &ParsedFunction,
    template: SemanticTemplate,
    occurrence: usize,
) -> Result<String, ObfuscateError> {
    apply_within(f, template, occurrence, None)
}

fn apply_within(f: &ParsedFunction, t: SemanticTemplate, occurrence: usize, limit: Option<&Span>) -> Result<String, ObfuscateError> {
    let ok = applicable_within(f, t, limit)?;
    let m = ok
        .get(occurrence)
        .ok_or_else(|| not_applicable(t, format!("only {} applicable occurrence(s)", ok.len())))?;
    let mut rw = Rewriter::new(&f.unit.tokens);
    rw.replace(m.span.clone(), m.text.clone());
    rw.finish().map_err(|e| not_applicable(t, format!("{e:?}")))
}

/// Upper bound on applications of one template to one function.
const MAX_ROUNDS: usize = 32;

/// Apply every template to a case until none matches.
///
/// Completion cases are rewritten only inside the kept prefix, and the
/// partial body is re-derived from the rewritten reference.
pub fn apply_semantic_obfuscation(case: &BenchmarkCase, typedefs: &HashSet<String>) -> Result<BenchmarkCase, ObfuscateError> {
    let mut body = case.reference_body.clone();
    let mut keep = match (&case.scenario, &case.partial_body) {
        (Scenario::Completion, Some(p)) => {
            let closed = format!("{p}}}");
            Some(top_level_statements(&closed, typedefs).map_err(|e| ObfuscateError::TargetParse { reason: e.to_string() })?)
        }
        (Scenario::Completion, None) => {
            return Err(ObfuscateError::TargetParse { reason: "completion case without partial body".into() })
        }
        _ => None,
    };
    let mut applied = Vec::new();
    for t in SemanticTemplate::ALL {
        for _ in 0..MAX_ROUNDS {
            let f = ParsedFunction::parse(&body, typedefs)?;
            let items = f.def().body.compound_items().unwrap_or(&[]);
            let limit = keep.map(|k| match k {
                0 => 0..0,
                _ => items[0].span.start..items[k - 1].span.end,
            });
            let Ok(next) = apply_within(&f, t, 0, limit.as_ref()) else { break };
            let after = ParsedFunction::parse(&next, typedefs)?;
            let grown = after.def().body.compound_items().map_or(0, <[_]>::len) as isize - items.len() as isize;
            keep = keep.map(|k| (k as isize + grown) as usize);
            body = next;
            if applied.last() != Some(&t) && !applied.contains(&t) {
                applied.push(t);
            }
        }
    }
    if applied.is_empty() {
        return Err(ObfuscateError::NotApplicable { what: "semantic".into(), reason: "no template applies".into() });
    }
    let mut out = case.clone();
    if let Some(k) = keep {
        out.partial_body =
            Some(mask_with_count(&body, typedefs, k).map_err(|e| ObfuscateError::TargetParse { reason: e.to_string() })?);
    }
    out.reference_body = body;
    out.lineage.push(ObfuscationRecord {
        strategy: Strategy::Semantic,
        seed: 0,
        rename_map: None,
        inlined_callees: None,
        templates_applied: Some(applied.iter().map(|t| t.id().to_string()).collect()),
        verified: false,
    });
    Ok(out)
}

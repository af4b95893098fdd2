//! Call-site inlining for structure obfuscation.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::ObfuscateError;
use crate::cfront::ast::*;
use crate::cfront::lexer::{lex, TokenKind};
use crate::cfront::parser::parse_with_typedefs;
use crate::cfront::rewrite::{render_range, Rewriter};
use crate::cfront::symbols::{resolve_symbols, Resolution};

/// A single function definition parsed from standalone text.
#[derive(Debug, Clone)]
pub struct ParsedFunction {
    pub unit: SourceUnit,
    index: usize,
}

impl ParsedFunction {
    pub fn parse(text: &str, typedefs: &HashSet<String>) -> Result<ParsedFunction, ObfuscateError> {
        let tokens = lex(text)?;
        let unit = parse_with_typedefs("<function>", tokens, typedefs);
        let index = unit
            .decls
            .iter()
            .position(|d| matches!(d.node, Node::Function(_)))
            .ok_or_else(|| ObfuscateError::TargetParse { reason: "no function definition found".into() })?;
        Ok(ParsedFunction { unit, index })
    }

    pub fn def(&self) -> &FunctionDef {
        match &self.unit.decls[self.index].node {
            Node::Function(f) => f,
            _ => unreachable!("index points at a function"),
        }
    }

    pub fn span(&self) -> Span {
        self.unit.decls[self.index].span.clone()
    }

    pub fn text(&self) -> String {
        self.unit.text(&(0..self.unit.tokens.len()))
    }

    /// Every call to `callee` by name, in source order.
    pub fn calls_to(&self, callee: &str) -> Vec<&Expr> {
        let mut out = Vec::new();
        self.def().body.walk_exprs(&mut |e| {
            if let ExprKind::Call { callee: c, .. } = &e.kind {
                if c.as_ident() == Some(callee) {
                    out.push(e);
                }
            }
        });
        out.sort_by_key(|e| e.span.start);
        out
    }

    /// Names called directly by this function.
    pub fn direct_callees(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.def().body.walk_exprs(&mut |e| {
            if let ExprKind::Call { callee, .. } = &e.kind {
                if let Some(n) = callee.as_ident() {
                    out.insert(n.to_string());
                }
            }
        });
        out
    }

    fn identifiers(&self) -> impl Iterator<Item = &str> {
        self.unit.tokens.iter().filter(|t| t.kind == TokenKind::Identifier).map(|t| t.text.as_str())
    }
}

/// The `ordinal`-th call (0-based, source order) to `callee` inside the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteLocator {
    pub callee: String,
    pub ordinal: usize,
}

/// Allocates identifiers that collide with nothing already spelled.
#[derive(Debug, Clone, Default)]
pub struct FreshNames {
    pub taken: BTreeSet<String>,
    counter: usize,
}

impl FreshNames {
    pub fn new(taken: impl IntoIterator<Item = String>) -> Self {
        FreshNames { taken: taken.into_iter().collect(), counter: 0 }
    }

    fn next_round(&mut self) -> usize {
        self.counter += 1;
        self.counter
    }

    fn fresh(&mut self, base: &str, round: usize) -> String {
        let mut name = format!("{base}_{round}");
        let mut k = 2;
        while self.taken.contains(&name) {
            name = format!("{base}_{round}_{k}");
            k += 1;
        }
        self.taken.insert(name.clone());
        name
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SiteContext {
    Statement,
    Assign { lhs: String, op: String },
    Return,
    DeclInit { init: Span },
}

fn unsupported(reason: impl Into<String>) -> ObfuscateError {
    ObfuscateError::Unsupported { reason: reason.into() }
}

/// True when evaluating `e` twice is indistinguishable from evaluating it once.
pub(crate) fn side_effect_free(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Ident { .. } | ExprKind::Literal | ExprKind::SizeofType | ExprKind::Sizeof(_) => true,
        ExprKind::Paren(x) | ExprKind::Cast { operand: x, .. } | ExprKind::Member { base: x, .. } => side_effect_free(x),
        ExprKind::Unary { op, operand } => op != "++" && op != "--" && side_effect_free(operand),
        ExprKind::Index { base, index } => side_effect_free(base) && side_effect_free(index),
        ExprKind::Binary { lhs, rhs, .. } => side_effect_free(lhs) && side_effect_free(rhs),
        ExprKind::Ternary { cond, then, els } => side_effect_free(cond) && side_effect_free(then) && side_effect_free(els),
        ExprKind::Comma(items) => items.iter().all(side_effect_free),
        _ => false,
    }
}

/// Locate the statement owning `call` and how the call's value is used.
fn classify_site<'a>(def: &'a FunctionDef, call: &Expr, unit: &SourceUnit) -> Result<(&'a Stmt, SiteContext), ObfuscateError> {
    let mut found: Option<(&Stmt, Result<SiteContext, String>)> = None;
    def.body.walk(&mut |s| {
        if found.is_some() {
            return;
        }
        let owns = s.own_exprs().iter().any(|e| {
            let mut hit = false;
            e.walk(&mut |x| hit |= x.span == call.span && matches!(x.kind, ExprKind::Call { .. }));
            hit
        });
        if !owns {
            return;
        }
        let is_call = |e: &Expr| e.unparen().span == call.span;
        let ctx = match &s.kind {
            StmtKind::Expr(Some(e)) if is_call(e) => Ok(SiteContext::Statement),
            StmtKind::Expr(Some(e)) => match &e.unparen().kind {
                ExprKind::Assign { op, lhs, rhs } if is_call(rhs) => {
                    if side_effect_free(lhs) {
                        Ok(SiteContext::Assign { lhs: unit.text(&lhs.span), op: op.clone() })
                    } else {
                        Err("assignment target has side effects".to_string())
                    }
                }
                _ => Err("call is nested inside a larger expression".to_string()),
            },
            StmtKind::Return(Some(e)) if is_call(e) => Ok(SiteContext::Return),
            StmtKind::Decl(d) if !d.is_static && d.declarators.len() == 1 => match &d.declarators[0].init {
                Some(init) if is_call(init) => Ok(SiteContext::DeclInit { init: init.span.clone() }),
                _ => Err("call is nested inside an initializer".to_string()),
            },
            _ => Err(format!("call in unsupported position ({})", stmt_kind_name(&s.kind))),
        };
        found = Some((s, ctx));
    });
    match found {
        Some((s, Ok(ctx))) => Ok((s, ctx)),
        Some((_, Err(reason))) => Err(unsupported(reason)),
        None => Err(unsupported("call site not found in a parsed statement")),
    }
}

fn stmt_kind_name(k: &StmtKind) -> &'static str {
    match k {
        StmtKind::Compound(_) => "block",
        StmtKind::Decl(_) => "declaration",
        StmtKind::Expr(_) => "expression",
        StmtKind::If { .. } => "if condition",
        StmtKind::While { .. } => "while condition",
        StmtKind::DoWhile { .. } => "do-while condition",
        StmtKind::For { .. } => "for header",
        StmtKind::Switch { .. } => "switch condition",
        StmtKind::Case { .. } => "case label",
        StmtKind::Return(_) => "return",
        _ => "statement",
    }
}

/// Callee-level facts that do not depend on the call site.
#[derive(Debug, Clone)]
pub struct CalleeShape {
    pub name: String,
    /// Return type spelling; `None` for `void`.
    pub return_type: Option<String>,
    /// Identifiers the body refers to that are not its own params/locals.
    pub free_names: BTreeSet<String>,
    param_names: Vec<String>,
}

/// Check the callee-level preconditions of inlining.
pub fn callee_shape(callee: &ParsedFunction) -> Result<CalleeShape, ObfuscateError> {
    let def = callee.def();
    let unit = &callee.unit;
    if def.is_variadic {
        return Err(unsupported("variadic callee"));
    }
    let mut bad = None;
    def.body.walk(&mut |s| match &s.kind {
        StmtKind::Opaque => bad = Some("callee body contains unparsed statements"),
        StmtKind::Decl(d) if d.is_static => bad = Some("callee declares static locals"),
        _ => {}
    });
    if let Some(reason) = bad {
        return Err(unsupported(reason));
    }
    let mut param_names = Vec::new();
    for p in &def.params {
        let text = unit.text(&p.span);
        if text.trim() == "void" && def.params.len() == 1 {
            continue;
        }
        if unit.tokens[p.span.clone()].iter().any(|t| t.is_punct("[")) {
            return Err(unsupported("array parameter"));
        }
        match &p.name {
            Some(n) => param_names.push(n.clone()),
            None => return Err(unsupported("unnamed parameter")),
        }
    }
    let return_type = return_type(def, unit)?;
    let st = resolve_symbols(unit, &[]);
    let mut free_names = BTreeSet::new();
    let sig = unit.significant(&(def.specifiers.start..def.body.span.end)).collect::<Vec<_>>();
    for (k, &i) in sig.iter().enumerate() {
        let t = &unit.tokens[i];
        if t.kind != TokenKind::Identifier {
            continue;
        }
        if k > 0 && (unit.tokens[sig[k - 1]].is_punct(".") || unit.tokens[sig[k - 1]].is_punct("->")) {
            continue;
        }
        match st.resolution(i) {
            Some(Resolution::Symbol { frame, .. }) if frame != 0 => {}
            _ => {
                free_names.insert(t.text.clone());
            }
        }
    }
    let mut calls_self = false;
    def.body.walk_exprs(&mut |e| {
        if let ExprKind::Call { callee, .. } = &e.kind {
            calls_self |= callee.as_ident() == Some(def.name.as_str());
        }
    });
    if calls_self {
        return Err(unsupported("recursive callee"));
    }
    Ok(CalleeShape { name: def.name.clone(), return_type, free_names, param_names })
}

const STORAGE: &[&str] = &["static", "inline", "__inline", "__inline__", "extern", "register", "_Noreturn"];

fn return_type(def: &FunctionDef, unit: &SourceUnit) -> Result<Option<String>, ObfuscateError> {
    let mut parts = Vec::new();
    let mut i = def.specifiers.start;
    while i < def.name_token {
        let t = &unit.tokens[i];
        i += 1;
        if t.is_trivia() || STORAGE.contains(&t.text.as_str()) {
            continue;
        }
        if t.is_punct("(") {
            return Err(unsupported("callee returns a function pointer"));
        }
        if t.text.starts_with("__attribute") {
            return Err(unsupported("callee has attributes"));
        }
        parts.push(t.text.clone());
    }
    if parts.is_empty() {
        return Err(unsupported("callee has no return type"));
    }
    if parts == ["void"] {
        return Ok(None);
    }
    let mut out = String::new();
    for p in parts {
        if p == "*" {
            if !out.ends_with('*') {
                out.push(' ');
            }
        } else if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&p);
    }
    Ok(Some(out))
}

/// Whitespace at the start of the line containing `token`.
pub(crate) fn line_indent(unit: &SourceUnit, token: usize) -> String {
    let mut i = token;
    while i > 0 {
        let t = &unit.tokens[i - 1];
        if let Some(nl) = t.text.rfind('\n') {
            let tail = &t.text[nl + 1..];
            return if t.kind == TokenKind::Whitespace { tail.to_string() } else { String::new() };
        }
        if t.kind != TokenKind::Whitespace {
            return String::new();
        }
        i -= 1;
    }
    unit.tokens.first().filter(|t| t.kind == TokenKind::Whitespace).map(|t| t.text.clone()).unwrap_or_default()
}

/// Prefix every line after the first with `indent`.
fn reindent(text: &str, indent: &str) -> String {
    let mut out = String::new();
    for (k, line) in text.split('\n').enumerate() {
        if k > 0 {
            out.push('\n');
            if !line.trim().is_empty() {
                out.push_str(indent);
            }
        }
        out.push_str(if k > 0 && line.trim().is_empty() { "" } else { line });
    }
    out
}

/// Inline one call site. Returns the caller's new full text.
///
/// `fresh` must already contain every identifier that the resulting program
/// can see; it is extended with the names introduced here.
pub fn inline_call_site(
    caller: &ParsedFunction,
    callee: &ParsedFunction,
    site: &SiteLocator,
    fresh: &mut FreshNames,
) -> Result<String, ObfuscateError> {
    let shape = callee_shape(callee)?;
    if shape.name != site.callee {
        return Err(unsupported(format!("callee is `{}`, site names `{}`", shape.name, site.callee)));
    }
    if shape.name == caller.def().name {
        return Err(unsupported("recursive callee"));
    }
    let calls = caller.calls_to(&site.callee);
    let call = *calls
        .get(site.ordinal)
        .ok_or_else(|| unsupported(format!("no call #{} to `{}`", site.ordinal, site.callee)))?;
    let ExprKind::Call { args, .. } = &call.kind else { unreachable!() };
    if args.len() != shape.param_names.len() {
        return Err(unsupported(format!(
            "argument count mismatch ({} given, {} expected)",
            args.len(),
            shape.param_names.len()
        )));
    }
    let cunit = &caller.unit;
    let (stmt, ctx) = classify_site(caller.def(), call, cunit)?;

    // Free names of the callee must mean the same thing at the call site.
    let cst = resolve_symbols(cunit, &[]);
    for name in &shape.free_names {
        if let Some((frame, _)) = cst.lookup_ordinary(name, call.span.start) {
            if frame != 0 {
                return Err(unsupported(format!("`{name}` is shadowed at the call site")));
            }
        }
    }

    fresh.taken.extend(caller.identifiers().map(str::to_string));
    fresh.taken.extend(callee.identifiers().map(str::to_string));
    let round = fresh.next_round();

    // Alpha-rename every callee-local name (params, locals, labels).
    let def = callee.def();
    let unit = &callee.unit;
    let st = resolve_symbols(unit, &[]);
    let mut renames: BTreeMap<String, String> = BTreeMap::new();
    let mut tokens = unit.tokens.clone();
    for i in def.specifiers.start..def.body.span.end {
        if tokens[i].kind != TokenKind::Identifier {
            continue;
        }
        if let Some(Resolution::Symbol { frame, .. }) = st.resolution(i) {
            if frame != 0 {
                let old = tokens[i].text.clone();
                let new = renames.entry(old.clone()).or_insert_with(|| fresh.fresh(&old, round)).clone();
                tokens[i].text = new;
            }
        }
    }

    let wants_value = !matches!(ctx, SiteContext::Statement);
    let ret_var = match (&shape.return_type, wants_value) {
        (Some(_), true) => Some(fresh.fresh("ret", round)),
        _ => None,
    };
    let mut returns = Vec::new();
    def.body.walk(&mut |s| {
        if let StmtKind::Return(e) = &s.kind {
            returns.push((s.span.clone(), e.as_ref().map(|e| e.span.clone())));
        }
    });
    let only_tail_return = returns.len() == 1 && {
        let items = def.body.compound_items().unwrap_or(&[]);
        items.last().is_some_and(|last| last.span == returns[0].0)
    };
    let label = (!returns.is_empty() && !only_tail_return).then(|| fresh.fresh("exit", round));
    let jump = label.as_ref().map(|l| format!(" goto {l};")).unwrap_or_default();
    let mut edits = Vec::new();
    for (span, e) in &returns {
        let value = e.as_ref().map(|e| render_range(&tokens, e.clone(), vec![]));
        let text = match (value, &ret_var) {
            (Some(v), Some(r)) => format!("{{ {r} = ({v});{jump} }}"),
            (Some(v), None) => format!("{{ (void)({v});{jump} }}"),
            (None, _) if label.is_some() => jump.trim_start().to_string(),
            (None, _) => ";".to_string(),
        };
        edits.push((span.clone(), text));
    }
    let body = render_range(&tokens, def.body.span.clone(), edits);

    let mut binds = Vec::new();
    let params: Vec<&Param> = def.params.iter().filter(|p| p.name.is_some()).collect();
    for (p, arg) in params.iter().zip(args) {
        let decl = render_range(&tokens, p.span.clone(), vec![]);
        binds.push(format!("{} = ({});", decl.trim(), cunit.text(&arg.span)));
    }

    let indent = line_indent(cunit, stmt.span.start);
    let inner = format!("{indent}    ");
    let mut block_lines: Vec<String> = Vec::new();
    block_lines.extend(binds);
    let needs_wrapper = !block_lines.is_empty() || label.is_some() || ret_var.is_some();
    let body_indent = if needs_wrapper { &inner } else { &indent };
    block_lines.push(reindent(&body, body_indent));
    if let Some(l) = &label {
        block_lines.push(format!("{l}: ;"));
    }
    let ret_type = shape.return_type.clone().unwrap_or_default();
    let replacement = match &ctx {
        SiteContext::DeclInit { init } => {
            let r = ret_var.clone().ok_or_else(|| unsupported("void callee used as a value"))?;
            let decl = render_range(&cunit.tokens, stmt.span.clone(), vec![(init.clone(), r.clone())]);
            let mut out = format!("{ret_type} {r};\n{indent}{{");
            for l in &block_lines {
                out.push_str(&format!("\n{inner}{l}"));
            }
            out.push_str(&format!("\n{indent}}}\n{indent}{decl}"));
            out
        }
        _ if !needs_wrapper => block_lines.pop().unwrap_or_default(),
        _ => {
            let mut lines = Vec::new();
            if let Some(r) = &ret_var {
                lines.push(format!("{ret_type} {r};"));
            }
            lines.extend(block_lines);
            match &ctx {
                SiteContext::Assign { lhs, op } => {
                    let r = ret_var.clone().ok_or_else(|| unsupported("void callee used as a value"))?;
                    lines.push(format!("{lhs} {op} {r};"));
                }
                SiteContext::Return => match &ret_var {
                    Some(r) => lines.push(format!("return {r};")),
                    None => lines.push("return;".into()),
                },
                _ => {}
            }
            let mut out = "{".to_string();
            for l in lines {
                out.push_str(&format!("\n{inner}{l}"));
            }
            out.push_str(&format!("\n{indent}}}"));
            out
        }
    };
    let mut rw = Rewriter::new(&cunit.tokens);
    rw.replace(stmt.span.clone(), replacement);
    rw.finish().map_err(|e| unsupported(format!("overlapping rewrite: {e:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pf(src: &str) -> ParsedFunction {
        ParsedFunction::parse(src, &HashSet::new()).unwrap()
    }

    fn inline(caller: &str, callee: &str, name: &str) -> Result<String, ObfuscateError> {
        let (c, d) = (pf(caller), pf(callee));
        let mut fresh = FreshNames::default();
        inline_call_site(&c, &d, &SiteLocator { callee: name.into(), ordinal: 0 }, &mut fresh)
    }

    fn squash(s: &str) -> String {
        s.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn return_site() {
        let out = inline("int f(void){return add(1,2);}", "int add(int a,int b){return a+b;}", "add").unwrap();
        assert_eq!(
            squash(&out),
            "int f(void){{ int ret_1; int a_1 = (1); int b_1 = (2); {{ ret_1 = (a_1+b_1); }} return ret_1; }}"
        );
        assert!(pf(&out).calls_to("add").is_empty());
    }

    #[test]
    fn void_statement_site_is_bare_body() {
        let out = inline("void f(void){ h(); }", "void h(void){x=1;}", "h").unwrap();
        assert_eq!(squash(&out), "void f(void){ {x=1;} }");
    }

    #[test]
    fn early_returns_jump_to_label() {
        let callee = "int pick(int v){ if (v < 0) return 0; return v; }";
        let out = inline("int f(int x){ int y = pick(x); return y; }", callee, "pick").unwrap();
        let s = squash(&out);
        assert!(s.contains("int ret_1; {"), "{s}");
        assert!(s.contains("{ ret_1 = (0); goto exit_1; }"), "{s}");
        assert!(s.contains("exit_1: ; } int y = ret_1;"), "{s}");
    }

    #[test]
    fn assignment_site() {
        let out = inline("void f(int *p){ *p += g(3); }", "int g(int k){ return k * 2; }", "g").unwrap();
        assert!(squash(&out).contains("*p += ret_1; }"), "{out}");
    }

    #[test]
    fn discarded_value_is_still_evaluated() {
        let out = inline("void f(void){ g(); }", "int g(void){ return bump(); }", "g").unwrap();
        assert!(squash(&out).contains("{ (void)(bump()); }"), "{out}");
    }

    #[test]
    fn fresh_names_avoid_collisions() {
        let out = inline("int f(int a_1){ return g(a_1); }", "int g(int a){ return a; }", "g").unwrap();
        assert!(out.contains("int a_1_2 = (a_1);"), "{out}");
    }

    #[test]
    fn rejections() {
        let unsupported = |r: Result<String, ObfuscateError>| matches!(r, Err(ObfuscateError::Unsupported { .. }));
        assert!(unsupported(inline("int f(void){ return r(3); }", "int r(int n){ return n ? r(n-1) : 0; }", "r")));
        assert!(unsupported(inline("int f(void){ return v(1, 2); }", "int v(int n, ...){ return n; }", "v")));
        assert!(unsupported(inline("int f(void){ return 1 + g(); }", "int g(void){ return 1; }", "g")));
        assert!(unsupported(inline("int f(void){ while (g()) {} return 0; }", "int g(void){ return 1; }", "g")));
        assert!(unsupported(inline("int f(void){ return g(1); }", "int g(void){ return 1; }", "g")));
        assert!(unsupported(inline("int f(void){ return g(); }", "int g(void){ static int n; return n++; }", "g")));
        // `limit` inside g refers to a global; the caller shadows it.
        assert!(unsupported(inline("int f(void){ int limit = 1; return g() + 0 * limit; }", "int g(void){ return limit; }", "g")));
        assert!(unsupported(inline("int f(void){ int limit = 1; int r = g(); return r + limit; }", "int g(void){ return limit; }", "g")));
    }

    #[test]
    fn side_effect_free_exprs() {
        let e = |s: &str| {
            let f = pf(&format!("void t(void){{ {s}; }}"));
            let StmtKind::Expr(Some(e)) = &f.def().body.compound_items().unwrap()[0].kind else { panic!() };
            side_effect_free(e)
        };
        assert!(e("a[i].b->c"));
        assert!(e("*p + sizeof(x++)"));
        assert!(!e("a[i++]"));
        assert!(!e("f(x)"));
        assert!(!e("x = 1"));
    }
}

//! Direct-call graph over function definitions.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::Serialize;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CallSite {
    pub caller: String,
    pub file: String,
    /// First token of the call expression.
    pub token: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CallGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
    /// Calls through pointers or computed expressions.
    pub unresolved: Vec<CallSite>,
}

impl CallGraph {
    pub fn callees(&self, caller: &str) -> BTreeSet<&str> {
        self.edges.iter().filter(|(a, _)| a == caller).map(|(_, b)| b.as_str()).collect()
    }

    pub fn callers(&self, callee: &str) -> BTreeSet<&str> {
        self.edges.iter().filter(|(_, b)| b == callee).map(|(a, _)| a.as_str()).collect()
    }

    /// True when `f` can reach itself through one or more edges.
    pub fn is_recursive(&self, f: &str) -> bool {
        let adj = self.adjacency();
        let mut seen = HashSet::new();
        let mut stack: Vec<&str> = adj.get(f).map(|v| v.to_vec()).unwrap_or_default();
        while let Some(n) = stack.pop() {
            if n == f {
                return true;
            }
            if seen.insert(n) {
                if let Some(next) = adj.get(n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        false
    }

    fn adjacency(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (a, b) in &self.edges {
            adj.entry(a).or_default().push(b);
        }
        adj
    }
}

/// Names declared as parameters or locals inside `f`.
pub fn local_names(f: &FunctionDef) -> HashSet<String> {
    let mut out: HashSet<String> = f.params.iter().filter_map(|p| p.name.clone()).collect();
    f.body.walk(&mut |s| {
        let decl = match &s.kind {
            StmtKind::Decl(d) => Some(d),
            StmtKind::For { init: ForInit::Decl(d), .. } => Some(d),
            _ => None,
        };
        if let Some(d) = decl {
            out.extend(d.declarators.iter().map(|d| d.name.clone()));
        }
    });
    out
}

/// Build the call graph of all function definitions in `units`.
///
/// Function-like macro invocations are not calls. A call naming a local,
/// parameter or global variable goes through a pointer and is recorded as
/// unresolved, as is any call whose callee is not a plain name.
pub fn build_call_graph(units: &[SourceUnit]) -> CallGraph {
    let mut macros = HashSet::new();
    let mut variables = HashSet::new();
    let mut g = CallGraph::default();
    for u in units {
        for tl in &u.decls {
            match &tl.node {
                Node::Macro(m) => {
                    macros.insert(m.name.clone());
                }
                Node::GlobalVar(v) => {
                    variables.extend(v.declarators.iter().filter(|d| !d.is_function).map(|d| d.name.clone()));
                }
                Node::Function(f) => {
                    g.nodes.insert(f.name.clone());
                }
                _ => {}
            }
        }
    }
    for u in units {
        for (_, f) in u.functions() {
            let locals = local_names(f);
            f.body.walk_exprs(&mut |e| {
                let ExprKind::Call { callee, .. } = &e.kind else { return };
                match callee.as_ident() {
                    Some(name) if macros.contains(name) && !locals.contains(name) => {}
                    Some(name) if !locals.contains(name) && !variables.contains(name) => {
                        g.edges.insert((f.name.clone(), name.to_string()));
                    }
                    _ => g.unresolved.push(CallSite {
                        caller: f.name.clone(),
                        file: u.path.clone(),
                        token: e.span.start,
                        text: u.text(&e.span),
                    }),
                }
            });
        }
    }
    g.unresolved.sort();
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::lexer::TokenKind;
    use crate::cfront::parse_source;

    fn graph(src: &str) -> CallGraph {
        build_call_graph(&[parse_source("a.c", src).unwrap()])
    }

    #[test]
    fn direct_edges() {
        let g = graph("int g(void){return 1;} int h(void){return 2;} int f(void){ return g() + h(); }");
        let from_f: Vec<_> = g.callees("f").into_iter().collect();
        assert_eq!(from_f, vec!["g", "h"]);
        assert!(g.callees("g").is_empty());
    }

    #[test]
    fn pointer_calls_unresolved() {
        let g = graph("int f(int (*fp)(int)) { return fp(1); }");
        assert!(g.edges.is_empty());
        assert_eq!(g.unresolved.len(), 1);
        assert_eq!(g.unresolved[0].text, "fp(1)");
    }

    #[test]
    fn macros_are_not_edges() {
        let g = graph("#define SQ(x) ((x)*(x))\nint f(int a) { return SQ(a) + abs(a); }");
        assert_eq!(g.edges.iter().cloned().collect::<Vec<_>>(), vec![("f".into(), "abs".into())]);
    }

    #[test]
    fn recursion_detection() {
        let g = graph("int a(int n); int b(int n){ return n ? a(n-1) : 0; } int a(int n){ return b(n); } int c(void){ return a(3); }");
        assert!(g.is_recursive("a"));
        assert!(g.is_recursive("b"));
        assert!(!g.is_recursive("c"));
    }

    #[test]
    fn edges_have_textual_call() {
        let src = "int g(int x){return x;} int f(int y){ int z = g (y); return g(z) + g(g(1)); }";
        let u = parse_source("a.c", src).unwrap();
        let g = build_call_graph(std::slice::from_ref(&u));
        for (caller, callee) in &g.edges {
            let (tl, _) = u.function(caller).unwrap();
            let sig: Vec<_> = u.significant(&tl.span).collect();
            let found = sig.windows(2).any(|w| {
                let (a, b) = (&u.tokens[w[0]], &u.tokens[w[1]]);
                a.kind == TokenKind::Identifier && &a.text == callee && b.is_punct("(")
            });
            assert!(found, "{caller} -> {callee}");
        }
    }
}

//! C front end: lossless lexer, subset parser, symbol resolution, call graph
//! and source rendering.

pub mod ast;
pub mod callgraph;
pub mod lexer;
pub mod parser;
pub mod project;
pub mod rewrite;
pub mod symbols;

pub use ast::{FunctionDef, Node, SourceUnit, Span, Stmt, StmtKind};
pub use callgraph::{build_call_graph, CallGraph};
pub use lexer::{lex, Token, TokenKind};
pub use parser::parse;
pub use project::{Project, ProjectFile, TestMatcher};
pub use rewrite::Rewriter;
pub use symbols::{resolve_symbols, Resolution, SymbolKind, SymbolTable};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrontError {
    #[error("unterminated string literal at {line}:{col}")]
    UnterminatedString { line: u32, col: u32 },
    #[error("unterminated comment at {line}:{col}")]
    UnterminatedComment { line: u32, col: u32 },
    #[error("{path}: {source}")]
    InFile { path: String, source: Box<FrontError> },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Lex and parse `source` in one step.
pub fn parse_source(path: &str, source: &str) -> Result<SourceUnit, FrontError> {
    let tokens = lex(source).map_err(|e| FrontError::InFile { path: path.to_string(), source: Box::new(e) })?;
    Ok(parser::parse_with_typedefs(path, tokens, &Default::default()))
}

/// Render a unit back to text. With `normalize_ws`, whitespace runs collapse
/// to a single newline or space.
pub fn render(unit: &SourceUnit, normalize_ws: bool) -> String {
    render_tokens(&unit.tokens, normalize_ws)
}

pub fn render_tokens(tokens: &[Token], normalize_ws: bool) -> String {
    if !normalize_ws {
        return lexer::concat(tokens);
    }
    let mut out = String::new();
    for t in tokens {
        if t.kind == TokenKind::Whitespace {
            out.push(if t.text.contains('\n') { '\n' } else { ' ' });
        } else {
            out.push_str(&t.text);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kinds_texts(ts: &[Token]) -> Vec<(TokenKind, String)> {
        ts.iter().map(|t| (t.kind, t.text.clone())).collect()
    }

    #[test]
    fn render_round_trip() {
        let src = "int f(void){return 1;}";
        assert_eq!(render(&parse(lex(src).unwrap()), false), src);
    }

    #[test]
    fn opaque_asm_kept_verbatim() {
        let src = "__asm__ ( \"movl %eax, %ebx\" ) ;\nint g;\n";
        let u = parse(lex(src).unwrap());
        assert!(render(&u, false).contains("__asm__ ( \"movl %eax, %ebx\" ) ;"));
    }

    #[test]
    fn normalized_whitespace() {
        let u = parse(lex("int  x ;\n\n\nint y;").unwrap());
        assert_eq!(render(&u, true), "int x ;\nint y;");
    }

    proptest! {
        #[test]
        fn render_relexes_identically(src in "[a-z(){};=+*0-9 \n]{0,80}") {
            let toks = lex(&src).unwrap();
            let unit = parse(toks.clone());
            let again = lex(&render(&unit, false)).unwrap();
            prop_assert_eq!(kinds_texts(&again), kinds_texts(&toks));
        }
    }
}

//! Lossless C tokenizer.
//!
//! Every byte of the input lands in exactly one token, so concatenating the
//! token texts reproduces the source. Comments and whole preprocessor lines
//! (including backslash continuations) are single tokens.

use serde::{Deserialize, Serialize};

use super::FrontError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Identifier,
    Keyword,
    Literal,
    Punctuator,
    Comment,
    PreprocessorDirective,
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub col: u32,
}

impl Token {
    /// Whitespace and comments: tokens the parser skips over.
    pub fn is_trivia(&self) -> bool {
        matches!(
            self.kind,
            TokenKind::Whitespace | TokenKind::Comment | TokenKind::PreprocessorDirective
        )
    }

    pub fn is_ident(&self, name: &str) -> bool {
        self.kind == TokenKind::Identifier && self.text == name
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punctuator && self.text == p
    }

    pub fn is_keyword(&self, k: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == k
    }
}

pub const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool", "_Complex", "_Imaginary",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

const PUNCTUATORS: &[&str] = &[
    "...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "*=",
    "/=", "%=", "+=", "-=", "&=", "^=", "|=", "##",
];

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        self.rest().starts_with(s)
    }
}

/// Tokenize C source text.
pub fn lex(source: &str) -> Result<Vec<Token>, FrontError> {
    let mut cur = Cursor { src: source, pos: 0, line: 1, col: 1 };
    let mut tokens = Vec::new();
    // A directive may only start where the line so far holds whitespace.
    let mut at_line_start = true;

    while let Some(c) = cur.peek() {
        let start = cur.pos;
        let (line, col) = (cur.line, cur.col);
        let kind = if c.is_whitespace() || (c == '\\' && matches!(cur.peek_at(1), Some('\n'))) {
            while let Some(c) = cur.peek() {
                if c.is_whitespace() {
                    if c == '\n' {
                        at_line_start = true;
                    }
                    cur.bump();
                } else if c == '\\' && cur.peek_at(1) == Some('\n') {
                    cur.bump();
                    cur.bump();
                } else {
                    break;
                }
            }
            TokenKind::Whitespace
        } else if cur.starts_with("//") {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            TokenKind::Comment
        } else if cur.starts_with("/*") {
            lex_block_comment(&mut cur, line, col)?;
            TokenKind::Comment
        } else if c == '#' && at_line_start {
            lex_directive(&mut cur)?;
            TokenKind::PreprocessorDirective
        } else if is_string_start(&cur) {
            lex_quoted(&mut cur, line, col)?;
            TokenKind::Literal
        } else if c.is_ascii_alphabetic() || c == '_' {
            while matches!(cur.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                cur.bump();
            }
            if is_keyword(&source[start..cur.pos]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if c.is_ascii_digit() || (c == '.' && matches!(cur.peek_at(1), Some(d) if d.is_ascii_digit())) {
            lex_number(&mut cur);
            TokenKind::Literal
        } else {
            if let Some(p) = PUNCTUATORS.iter().find(|p| cur.starts_with(p)) {
                for _ in 0..p.len() {
                    cur.bump();
                }
            } else {
                cur.bump();
            }
            TokenKind::Punctuator
        };
        if kind != TokenKind::Whitespace {
            at_line_start = false;
        }
        tokens.push(Token { kind, text: source[start..cur.pos].to_string(), line, col });
    }
    Ok(tokens)
}

fn is_string_start(cur: &Cursor) -> bool {
    let rest = cur.rest();
    for prefix in ["u8", "L", "u", "U", ""] {
        if let Some(after) = rest.strip_prefix(prefix) {
            if after.starts_with('"') || after.starts_with('\'') {
                // `u8'x'` is not a C99 literal, but lexing it as one is harmless.
                return true;
            }
        }
    }
    false
}

fn lex_quoted(cur: &mut Cursor, line: u32, col: u32) -> Result<(), FrontError> {
    while let Some(c) = cur.peek() {
        if c == '"' || c == '\'' {
            break;
        }
        cur.bump();
    }
    let quote = cur.bump().expect("quote present");
    loop {
        match cur.peek() {
            None | Some('\n') => return Err(FrontError::UnterminatedString { line, col }),
            Some('\\') => {
                cur.bump();
                if cur.bump().is_none() {
                    return Err(FrontError::UnterminatedString { line, col });
                }
            }
            Some(c) => {
                cur.bump();
                if c == quote {
                    return Ok(());
                }
            }
        }
    }
}

fn lex_block_comment(cur: &mut Cursor, line: u32, col: u32) -> Result<(), FrontError> {
    cur.bump();
    cur.bump();
    loop {
        if cur.starts_with("*/") {
            cur.bump();
            cur.bump();
            return Ok(());
        }
        if cur.bump().is_none() {
            return Err(FrontError::UnterminatedComment { line, col });
        }
    }
}

fn lex_directive(cur: &mut Cursor) -> Result<(), FrontError> {
    loop {
        match cur.peek() {
            None | Some('\n') => return Ok(()),
            Some('\\') if cur.peek_at(1) == Some('\n') => {
                cur.bump();
                cur.bump();
            }
            Some('/') if cur.peek_at(1) == Some('*') => {
                let (line, col) = (cur.line, cur.col);
                lex_block_comment(cur, line, col)?;
            }
            Some('"') | Some('\'') => {
                let (line, col) = (cur.line, cur.col);
                lex_quoted(cur, line, col)?;
            }
            Some(_) => {
                cur.bump();
            }
        }
    }
}

fn lex_number(cur: &mut Cursor) {
    let mut prev = '\0';
    while let Some(c) = cur.peek() {
        let exp_sign = (c == '+' || c == '-') && matches!(prev, 'e' | 'E' | 'p' | 'P');
        if c.is_ascii_alphanumeric() || c == '_' || c == '.' || exp_sign {
            prev = c;
            cur.bump();
        } else {
            break;
        }
    }
}

/// Concatenate token texts.
pub fn concat(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.text.as_str()).collect()
}

//! Tokenizer shared by the MiniSol and DBDL front ends.

use std::fmt;

use crate::word::{parse_word, U256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Decimal or hex integer literal. `hex_digits` is set for `0x` literals.
    Number {
        value: U256,
        hex_digits: Option<usize>,
    },
    Str(String),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number { value, .. } => write!(f, "number {value}"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommentStyle {
    /// `//` to end of line.
    DoubleSlash,
    /// `#` to end of line.
    Hash,
}

const PUNCTS: &[&str] = &[
    "=>", "==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "*=", "{", "}", "(", ")", "[", "]", ";",
    ",", ".", "=", "<", ">", "+", "-", "*", "/", "%", "!", ":",
];

pub fn tokenize(text: &str, comments: CommentStyle) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        let comment_start = match comments {
            CommentStyle::DoubleSlash => c == '/' && chars.get(i + 1) == Some(&'/'),
            CommentStyle::Hash => c == '#',
        };
        if comment_start {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                pos,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let is_hex = c == '0' && matches!(chars.get(i + 1), Some('x') | Some('X'));
            if is_hex {
                bump!();
                bump!();
                while i < chars.len() && chars[i].is_ascii_hexdigit() {
                    bump!();
                }
            } else {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
            }
            if i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                return Err(LexError {
                    pos,
                    message: "malformed number literal".into(),
                });
            }
            let text: String = chars[start..i].iter().collect();
            let value = parse_word(&text).ok_or_else(|| LexError {
                pos,
                message: if is_hex && text.len() == 2 {
                    "hex literal has no digits".into()
                } else {
                    "number literal exceeds 256 bits".into()
                },
            })?;
            let hex_digits = is_hex.then(|| text.len() - 2);
            out.push(Token {
                tok: Tok::Number { value, hex_digits },
                pos,
            });
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(LexError {
                            pos,
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some('"') => {
                        bump!();
                        break;
                    }
                    Some('\\') => {
                        let esc_pos = Pos { line, col };
                        bump!();
                        let escaped = match chars.get(i) {
                            Some('"') => '"',
                            Some('\\') => '\\',
                            Some('n') => '\n',
                            Some('t') => '\t',
                            _ => {
                                return Err(LexError {
                                    pos: esc_pos,
                                    message: "unknown escape sequence".into(),
                                })
                            }
                        };
                        s.push(escaped);
                        bump!();
                    }
                    Some(&ch) => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                pos,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                for _ in 0..p.len() {
                    bump!();
                }
                out.push(Token {
                    tok: Tok::Punct(p),
                    pos,
                });
            }
            None => {
                return Err(LexError {
                    pos,
                    message: format!("unexpected character {c:?}"),
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos { line, col },
    });
    Ok(out)
}

/// Escapes a string for re-lexing as a string literal.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Cursor over a token stream with the usual expect/eat helpers.
pub(crate) struct Cursor {
    toks: Vec<Token>,
    idx: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Expected {
    pub pos: Pos,
    pub expected: String,
    pub found: String,
}

impl Cursor {
    pub fn new(toks: Vec<Token>) -> Self {
        Cursor { toks, idx: 0 }
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.idx].tok
    }

    pub fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.idx + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    pub fn pos(&self) -> Pos {
        self.toks[self.idx].pos
    }

    pub fn pos_at(&self, n: usize) -> Pos {
        let i = (self.idx + n).min(self.toks.len() - 1);
        self.toks[i].pos
    }

    pub fn advance(&mut self) -> Token {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    pub fn error(&self, expected: impl Into<String>) -> Expected {
        Expected {
            pos: self.pos(),
            expected: expected.into(),
            found: self.peek().to_string(),
        }
    }

    pub fn expect_punct(&mut self, p: &str) -> Result<(), Expected> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(format!("`{p}`")))
        }
    }

    pub fn expect_kw(&mut self, kw: &str) -> Result<(), Expected> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(format!("`{kw}`")))
        }
    }

    pub fn expect_number(&mut self) -> Result<(U256, Option<usize>), Expected> {
        match self.peek().clone() {
            Tok::Number { value, hex_digits } => {
                self.advance();
                Ok((value, hex_digits))
            }
            _ => Err(self.error("number")),
        }
    }

    pub fn expect_string(&mut self) -> Result<String, Expected> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.error("string literal")),
        }
    }
}

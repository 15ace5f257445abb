//! Shared token layer for the program DSL and the specification syntax.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Dot,
    DotDot,
    Assign, // :=
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Plus,
    Minus,
    Bang,
    Amp,
    Pipe,
    Arrow,  // ->
    DArrow, // <->
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "`{s}`"),
            Tok::Int(n) => return write!(f, "`{n}`"),
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::DotDot => "..",
            Tok::Assign => ":=",
            Tok::Eq => "=",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Bang => "!",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::Arrow => "->",
            Tok::DArrow => "<->",
        };
        write!(f, "`{s}`")
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Lexed {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

struct Lexer {
    chars: Vec<char>,
    i: usize,
    line: u32,
    col: u32,
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn advance(&mut self) -> Option<char> {
        let c = self.chars.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.advance();
            true
        } else {
            false
        }
    }
}

/// Tokenize; `//` starts a line comment.
pub(crate) fn lex(text: &str) -> Result<Vec<Lexed>, (u32, u32, String)> {
    let mut lx = Lexer { chars: text.chars().collect(), i: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    while let Some(c) = lx.peek() {
        let (tl, tc) = (lx.line, lx.col);
        if c.is_whitespace() {
            lx.advance();
            continue;
        }
        if c == '/' {
            lx.advance();
            if lx.peek() == Some('/') {
                while let Some(c) = lx.peek() {
                    if c == '\n' {
                        break;
                    }
                    lx.advance();
                }
                continue;
            }
            return Err((tl, tc, "unexpected character `/`".into()));
        }
        if c.is_ascii_digit() {
            let mut n: i64 = 0;
            while let Some(c) = lx.peek() {
                if let Some(d) = c.to_digit(10) {
                    n = n * 10 + d as i64;
                    lx.advance();
                } else {
                    break;
                }
            }
            out.push(Lexed { tok: Tok::Int(n), line: tl, col: tc });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(c) = lx.peek() {
                if c.is_alphanumeric() || c == '_' {
                    s.push(c);
                    lx.advance();
                } else {
                    break;
                }
            }
            out.push(Lexed { tok: Tok::Ident(s), line: tl, col: tc });
            continue;
        }
        lx.advance();
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ';' => Tok::Semi,
            ',' => Tok::Comma,
            '+' => Tok::Plus,
            '!' => Tok::Bang,
            '&' => Tok::Amp,
            '|' => Tok::Pipe,
            '=' => Tok::Eq,
            ':' => {
                if lx.eat('=') {
                    Tok::Assign
                } else {
                    Tok::Colon
                }
            }
            '.' => {
                if lx.eat('.') {
                    Tok::DotDot
                } else {
                    Tok::Dot
                }
            }
            '<' => {
                if lx.eat('=') {
                    Tok::Le
                } else if lx.eat('-') {
                    if lx.eat('>') {
                        Tok::DArrow
                    } else {
                        return Err((tl, tc, "expected `<->`".into()));
                    }
                } else {
                    Tok::Lt
                }
            }
            '>' => {
                if lx.eat('=') {
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            '-' => {
                if lx.eat('>') {
                    Tok::Arrow
                } else {
                    Tok::Minus
                }
            }
            other => return Err((tl, tc, format!("unexpected character `{other}`"))),
        };
        out.push(Lexed { tok, line: tl, col: tc });
    }
    Ok(out)
}

/// Cursor over a token stream with one-token lookahead helpers.
pub(crate) struct Cursor {
    toks: Vec<Lexed>,
    pos: usize,
}

impl Cursor {
    pub fn new(toks: Vec<Lexed>) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    pub fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|l| &l.tok)
    }

    pub fn pos_info(&self) -> (u32, u32) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|l| (l.line, l.col))
            .unwrap_or((1, 1))
    }

    pub fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|l| l.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_ident(&mut self, kw: &str) -> bool {
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == kw {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    pub fn at_ident(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

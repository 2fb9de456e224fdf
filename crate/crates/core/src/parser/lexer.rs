use super::ParseError;
use crate::ast::KetLiteral;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Nat(u64),
    /// Real literal that is not a plain natural.
    Real(f64),
    /// Imaginary literal such as `0.8i`.
    Imag(f64),
    Ket(KetLiteral),
    /// `|name>` in specifications.
    State(String),
    Define,
    Dot,
    Semi,
    Backslash,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Par,
    ParShared(String),
    Bang,
    Query,
    Arrow,
    Colon,
    Eq,
    Plus,
    Minus,
    Geq,
    And,
    Or,
    Implies,
    Equiv,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("`{n}`"),
            Tok::Nat(n) => format!("number {n}"),
            Tok::Real(x) => format!("number {x}"),
            Tok::Imag(x) => format!("imaginary {x}i"),
            Tok::Ket(_) => "ket literal".into(),
            Tok::State(s) => format!("state |{s}>"),
            Tok::Define => "`:=`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Backslash => "`\\`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Par => "`||`".into(),
            Tok::ParShared(n) => format!("`||_{n}`"),
            Tok::Bang => "`!`".into(),
            Tok::Query => "`?`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Geq => "`>=`".into(),
            Tok::And => "`/\\`".into(),
            Tok::Or => "`\\/`".into(),
            Tok::Implies => "`=>`".into(),
            Tok::Equiv => "`==`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c == '\'' || c.is_alphanumeric()
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn peek3(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map(|(i, _)| *i).unwrap_or(self.src.len())
    }

    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            column,
            message: message.into(),
            expected: vec![],
        }
    }

    fn ident(&mut self) -> String {
        let start = self.offset();
        while self.peek().is_some_and(is_ident_continue) {
            self.bump();
        }
        let end = self.offset();
        self.src[start..end].to_string()
    }

    fn number(&mut self, line: usize, column: usize) -> Result<Tok, ParseError> {
        let start = self.offset();
        let mut real = false;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some('.') && self.peek2().is_some_and(|c| c.is_ascii_digit()) {
            real = true;
            self.bump();
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let sign = matches!(self.peek2(), Some('+' | '-'));
            let digit = if sign { self.peek3() } else { self.peek2() };
            if digit.is_some_and(|c| c.is_ascii_digit()) {
                real = true;
                self.bump();
                if sign {
                    self.bump();
                }
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
            }
        }
        let text = &self.src[start..self.offset()];
        let imaginary = self.peek() == Some('i') && !self.peek2().is_some_and(is_ident_continue);
        if imaginary {
            self.bump();
        }
        let value: f64 = text
            .parse()
            .map_err(|_| self.error(line, column, format!("malformed number `{text}`")))?;
        if imaginary {
            return Ok(Tok::Imag(value));
        }
        if !real {
            if let Ok(n) = text.parse::<u64>() {
                return Ok(Tok::Nat(n));
            }
        }
        Ok(Tok::Real(value))
    }

    /// After a `|` that does not start `||`.
    fn ket(&mut self, line: usize, column: usize) -> Result<Tok, ParseError> {
        let lit = match self.peek() {
            Some('0') => KetLiteral::Zero,
            Some('1') => KetLiteral::One,
            Some('+') => KetLiteral::Plus,
            Some('-') => KetLiteral::Minus,
            Some(c) if is_ident_start(c) => {
                let name = self.ident();
                self.close_ket(line, column)?;
                return Ok(Tok::State(name));
            }
            _ => {
                return Err(self.error(
                    line,
                    column,
                    "malformed ket: expected 0, 1, +, - or a state name after `|`",
                ))
            }
        };
        self.bump();
        self.close_ket(line, column)?;
        Ok(Tok::Ket(lit))
    }

    fn close_ket(&mut self, line: usize, column: usize) -> Result<(), ParseError> {
        match self.peek() {
            Some('>' | '⟩') => {
                self.bump();
                Ok(())
            }
            _ => Err(self.error(line, column, "unterminated ket: expected `>`")),
        }
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('-') if self.peek2() == Some('-') => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                _ => break,
            }
        }
        let (line, column) = (self.line, self.column);
        let Some(c) = self.peek() else {
            return Ok(Token {
                tok: Tok::Eof,
                line,
                column,
            });
        };
        let tok = if c.is_ascii_digit() {
            self.number(line, column)?
        } else if is_ident_start(c) {
            Tok::Name(self.ident())
        } else {
            self.bump();
            let two = |lx: &mut Self, next: char, yes: Tok, no: Tok| {
                if lx.peek() == Some(next) {
                    lx.bump();
                    yes
                } else {
                    no
                }
            };
            match c {
                ':' => match self.peek() {
                    Some('=') => {
                        self.bump();
                        Tok::Define
                    }
                    _ => Tok::Colon,
                },
                '≔' => Tok::Define,
                '.' => Tok::Dot,
                ';' => Tok::Semi,
                '\\' => two(self, '/', Tok::Or, Tok::Backslash),
                '/' => {
                    if self.peek() == Some('\\') {
                        self.bump();
                        Tok::And
                    } else {
                        return Err(self.error(line, column, "unexpected `/`"));
                    }
                }
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                '|' if self.peek() == Some('|') => {
                    self.bump();
                    self.par_tail()
                }
                '∥' => self.par_tail(),
                '|' => self.ket(line, column)?,
                '!' => Tok::Bang,
                '?' => Tok::Query,
                '-' => two(self, '>', Tok::Arrow, Tok::Minus),
                '→' => Tok::Arrow,
                '=' => match self.peek() {
                    Some('>') => {
                        self.bump();
                        Tok::Implies
                    }
                    Some('=') => {
                        self.bump();
                        Tok::Equiv
                    }
                    _ => Tok::Eq,
                },
                '+' => Tok::Plus,
                '>' => {
                    if self.peek() == Some('=') {
                        self.bump();
                        Tok::Geq
                    } else {
                        return Err(self.error(line, column, "unexpected `>`"));
                    }
                }
                '≥' | '⩾' => Tok::Geq,
                '∧' => Tok::And,
                '∨' => Tok::Or,
                '⇒' => Tok::Implies,
                '≡' => Tok::Equiv,
                other => {
                    return Err(self.error(line, column, format!("unexpected character `{}`", other.escape_debug())))
                }
            }
        };
        Ok(Token { tok, line, column })
    }

    fn par_tail(&mut self) -> Tok {
        if self.peek() == Some('_') && self.peek2().is_some_and(is_ident_start) {
            self.bump();
            Tok::ParShared(self.ident())
        } else {
            Tok::Par
        }
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer {
        chars: src.char_indices().peekable(),
        src,
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let eof = t.tok == Tok::Eof;
        out.push(t);
        if eof {
            return Ok(out);
        }
    }
}

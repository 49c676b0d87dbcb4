//! Indentation-aware tokenizer.

use super::ast::Span;
use super::error::VplError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Kw(&'static str),
    Int(i64),
    Float(f64),
    Str(String),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

const KEYWORDS: &[&str] = &[
    "if", "elif", "else", "for", "in", "return", "and", "or", "not", "True", "False", "None",
    "def", "pass", "break", "continue",
    // recognised only so the parser can reject them by name
    "import", "from", "while", "lambda", "class", "with", "try", "except", "finally", "raise",
    "yield", "async", "await", "global", "nonlocal", "del", "assert", "is", "as",
];

// longest first
const OPERATORS: &[&str] = &[
    "**=", "//=", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "**", "//", "->", "(",
    ")", "[", "]", "{", "}", ",", ":", ".", "=", "+", "-", "*", "/", "%", "<", ">", ";", "@",
    "&", "|", "^", "~",
];

pub fn tokenize(source: &str) -> Result<Vec<Token>, VplError> {
    Lexer::new(source).run()
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    depth: usize,
    indents: Vec<usize>,
    out: Vec<Token>,
}

impl Lexer {
    fn new(source: &str) -> Self {
        let normalized = source.replace("\r\n", "\n").replace('\r', "\n").replace('\t', "    ");
        Self {
            chars: normalized.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
            depth: 0,
            indents: vec![0],
            out: Vec::new(),
        }
    }

    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn here(&self) -> Span {
        Span::new(self.line, self.col)
    }

    fn push(&mut self, tok: Tok, span: Span) {
        self.out.push(Token { tok, span });
    }

    fn run(mut self) -> Result<Vec<Token>, VplError> {
        let mut at_line_start = true;
        while self.pos < self.chars.len() {
            if at_line_start && self.depth == 0 {
                at_line_start = false;
                if !self.handle_indentation()? {
                    continue;
                }
            }
            let c = self.peek(0).unwrap();
            let span = self.here();
            match c {
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        self.push(Tok::Newline, span);
                        at_line_start = true;
                    }
                }
                ' ' => {
                    self.bump();
                }
                '#' => {
                    while self.peek(0).is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                '\\' if self.peek(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                '\'' | '"' => {
                    let s = self.string(span)?;
                    self.push(Tok::Str(s), span);
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) => {
                    let tok = self.number(span)?;
                    self.push(tok, span);
                }
                c if c.is_alphabetic() || c == '_' => {
                    let word = self.word();
                    if matches!(self.peek(0), Some('\'' | '"')) {
                        let lower = word.to_ascii_lowercase();
                        let what = if lower.contains('f') {
                            "string formatting"
                        } else {
                            "string prefix"
                        };
                        return Err(VplError::parse(format!("construct not allowed: {what}"), span));
                    }
                    let tok = match KEYWORDS.iter().find(|k| **k == word) {
                        Some(k) => Tok::Kw(k),
                        None => Tok::Name(word),
                    };
                    self.push(tok, span);
                }
                _ => {
                    let op = OPERATORS
                        .iter()
                        .find(|op| op.chars().enumerate().all(|(i, oc)| self.peek(i) == Some(oc)))
                        .copied();
                    let Some(op) = op else {
                        return Err(VplError::parse(format!("unexpected character {c:?}"), span));
                    };
                    for _ in 0..op.chars().count() {
                        self.bump();
                    }
                    match op {
                        "(" | "[" | "{" => self.depth += 1,
                        ")" | "]" | "}" => {
                            if self.depth == 0 {
                                return Err(VplError::parse(format!("unmatched '{op}'"), span));
                            }
                            self.depth -= 1;
                        }
                        _ => {}
                    }
                    self.push(Tok::Op(op), span);
                }
            }
        }
        let end = self.here();
        if self.depth > 0 {
            return Err(VplError::parse("unexpected end of input inside brackets", end));
        }
        if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
            self.push(Tok::Newline, end);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, end);
        }
        self.push(Tok::Eof, end);
        Ok(self.out)
    }

    /// Consumes leading whitespace of a logical line and emits indent tokens.
    /// Returns false when the line was blank or a comment and got skipped.
    fn handle_indentation(&mut self) -> Result<bool, VplError> {
        let mut width = 0;
        while self.peek(0) == Some(' ') {
            self.bump();
            width += 1;
        }
        match self.peek(0) {
            None => return Ok(false),
            Some('\n') => {
                self.bump();
                return Ok(false);
            }
            Some('#') => {
                while self.peek(0).is_some_and(|c| c != '\n') {
                    self.bump();
                }
                if self.peek(0) == Some('\n') {
                    self.bump();
                }
                return Ok(false);
            }
            _ => {}
        }
        let span = self.here();
        let top = *self.indents.last().unwrap();
        if width > top {
            self.indents.push(width);
            self.push(Tok::Indent, span);
        } else if width < top {
            while *self.indents.last().unwrap() > width {
                self.indents.pop();
                self.push(Tok::Dedent, span);
            }
            if *self.indents.last().unwrap() != width {
                return Err(VplError::parse("inconsistent indentation", span));
            }
        }
        Ok(true)
    }

    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek(0).filter(|c| c.is_alphanumeric() || *c == '_') {
            s.push(c);
            self.bump();
        }
        s
    }

    fn number(&mut self, span: Span) -> Result<Tok, VplError> {
        let mut text = String::new();
        let mut is_float = false;
        let digits = |lx: &mut Lexer, text: &mut String| {
            while let Some(c) = lx.peek(0).filter(|c| c.is_ascii_digit() || *c == '_') {
                if c != '_' {
                    text.push(c);
                }
                lx.bump();
            }
        };
        digits(self, &mut text);
        if self.peek(0) == Some('.') && !self.peek(1).is_some_and(|c| c.is_alphabetic() || c == '_') {
            is_float = true;
            text.push('.');
            self.bump();
            digits(self, &mut text);
        }
        if matches!(self.peek(0), Some('e' | 'E')) {
            let sign = matches!(self.peek(1), Some('+' | '-'));
            let digit_at = if sign { 2 } else { 1 };
            if self.peek(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                is_float = true;
                text.push('e');
                self.bump();
                if sign {
                    text.push(self.bump().unwrap());
                }
                digits(self, &mut text);
            }
        }
        if self.peek(0).is_some_and(|c| c.is_alphanumeric() || c == '_') {
            return Err(VplError::parse("invalid numeric literal", span));
        }
        if is_float {
            let v: f64 = text
                .parse()
                .map_err(|_| VplError::parse("invalid float literal", span))?;
            if !v.is_finite() {
                return Err(VplError::parse("float literal out of range", span));
            }
            Ok(Tok::Float(v))
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| VplError::parse("integer literal too large", span))
        }
    }

    fn string(&mut self, span: Span) -> Result<String, VplError> {
        let quote = self.bump().unwrap();
        let triple = self.peek(0) == Some(quote) && self.peek(1) == Some(quote);
        if triple {
            self.bump();
            self.bump();
        }
        let mut out = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(VplError::parse("unterminated string literal", span));
            };
            if c == quote {
                if !triple {
                    return Ok(out);
                }
                if self.peek(0) == Some(quote) && self.peek(1) == Some(quote) {
                    self.bump();
                    self.bump();
                    return Ok(out);
                }
                out.push(c);
                continue;
            }
            match c {
                '\n' if !triple => {
                    return Err(VplError::parse("unterminated string literal", span));
                }
                '\\' => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some('0') => out.push('\0'),
                    Some('\\') => out.push('\\'),
                    Some('\'') => out.push('\''),
                    Some('"') => out.push('"'),
                    Some('\n') => {}
                    Some(other) => {
                        out.push('\\');
                        out.push(other);
                    }
                    None => return Err(VplError::parse("unterminated string literal", span)),
                },
                c => out.push(c),
            }
        }
    }
}

//! Python tokenizer.
//!
//! The strict mode produces the layout tokens the parser needs and rejects
//! malformed input. The lenient mode never fails and is what the similarity
//! metrics use on arbitrary model output.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokKind {
    Name,
    Keyword,
    Number,
    Str,
    Op,
    Newline,
    Indent,
    Dedent,
    EndMarker,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub text: String,
    pub line: usize,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct LexError {
    pub line: usize,
    pub message: String,
}

pub const KEYWORDS: [&str; 35] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in",
    "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while", "with",
    "yield",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

const OPERATORS: [&str; 47] = [
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", ">>", "<<", "<=", ">=", "==", "!=",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@", "&", "|",
    "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ";", ".", "=",
];

struct Scanner<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    strict: bool,
    tokens: Vec<Token>,
    indents: Vec<usize>,
    depth: usize,
    at_line_start: bool,
    _src: &'a str,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str, strict: bool) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            strict,
            tokens: Vec::new(),
            indents: vec![0],
            depth: 0,
            at_line_start: true,
            _src: src,
        }
    }

    fn peek(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn push(&mut self, kind: TokKind, text: impl Into<String>) {
        self.tokens.push(Token {
            kind,
            text: text.into(),
            line: self.line,
        });
    }

    fn err(&self, message: impl Into<String>) -> LexError {
        LexError {
            line: self.line,
            message: message.into(),
        }
    }

    /// Handles indentation at the start of a logical line. Returns false
    /// when the line is blank or comment-only and should be skipped.
    fn line_start(&mut self) -> Result<bool, LexError> {
        let mut col = 0usize;
        while let Some(c) = self.peek(0) {
            match c {
                ' ' => col += 1,
                '\t' => col = (col / 8 + 1) * 8,
                '\x0c' => col = 0,
                _ => break,
            }
            self.pos += 1;
        }
        match self.peek(0) {
            None => return Ok(false),
            Some('#') => {
                self.skip_comment();
                return Ok(false);
            }
            Some('\n') => {
                self.pos += 1;
                self.line += 1;
                return Ok(false);
            }
            Some('\r') => {
                self.pos += 1;
                return Ok(false);
            }
            Some('\\') if self.peek(1) == Some('\n') => {
                return Ok(true);
            }
            _ => {}
        }
        let current = *self.indents.last().expect("indent stack never empty");
        if col > current {
            self.indents.push(col);
            self.push(TokKind::Indent, "");
        } else if col < current {
            while col < *self.indents.last().expect("indent stack never empty") {
                self.indents.pop();
                self.push(TokKind::Dedent, "");
            }
            if col != *self.indents.last().expect("indent stack never empty") {
                if self.strict {
                    return Err(self.err("unindent does not match any outer indentation level"));
                }
                self.indents.push(col);
            }
        }
        Ok(true)
    }

    fn skip_comment(&mut self) {
        while let Some(c) = self.peek(0) {
            if c == '\n' {
                break;
            }
            self.pos += 1;
        }
    }

    fn string_prefix_len(&self) -> Option<usize> {
        let mut n = 0;
        while n < 3 {
            match self.peek(n) {
                Some(c) if "rRbBuUfF".contains(c) => n += 1,
                Some('\'' | '"') => return Some(n),
                _ => return None,
            }
        }
        None
    }

    fn scan_string(&mut self, prefix_len: usize) -> Result<(), LexError> {
        let start = self.pos;
        let start_line = self.line;
        self.pos += prefix_len;
        let quote = self.peek(0).expect("string starts with a quote");
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };
        loop {
            match self.peek(0) {
                None => {
                    if self.strict {
                        return Err(LexError {
                            line: start_line,
                            message: "unterminated string literal".into(),
                        });
                    }
                    break;
                }
                Some('\\') => {
                    if self.peek(1) == Some('\n') {
                        self.line += 1;
                    }
                    self.pos += 2.min(self.chars.len() - self.pos);
                }
                Some('\n') if !triple => {
                    if self.strict {
                        return Err(LexError {
                            line: start_line,
                            message: "unterminated string literal".into(),
                        });
                    }
                    break;
                }
                Some('\n') => {
                    self.line += 1;
                    self.pos += 1;
                }
                Some(c) if c == quote => {
                    if !triple {
                        self.pos += 1;
                        break;
                    }
                    if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                        self.pos += 3;
                        break;
                    }
                    self.pos += 1;
                }
                Some(_) => self.pos += 1,
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        self.tokens.push(Token {
            kind: TokKind::Str,
            text,
            line: start_line,
        });
        Ok(())
    }

    fn scan_number(&mut self) {
        let start = self.pos;
        let is_radix = self.peek(0) == Some('0')
            && matches!(self.peek(1), Some('x' | 'X' | 'o' | 'O' | 'b' | 'B'));
        if is_radix {
            self.pos += 2;
            while self.peek(0).is_some_and(|c| c.is_ascii_hexdigit() || c == '_') {
                self.pos += 1;
            }
        } else {
            while self.peek(0).is_some_and(|c| c.is_ascii_digit() || c == '_') {
                self.pos += 1;
            }
            if self.peek(0) == Some('.') {
                self.pos += 1;
                while self.peek(0).is_some_and(|c| c.is_ascii_digit() || c == '_') {
                    self.pos += 1;
                }
            }
            if matches!(self.peek(0), Some('e' | 'E')) {
                let sign = usize::from(matches!(self.peek(1), Some('+' | '-')));
                if self.peek(1 + sign).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1 + sign;
                    while self.peek(0).is_some_and(|c| c.is_ascii_digit() || c == '_') {
                        self.pos += 1;
                    }
                }
            }
            if matches!(self.peek(0), Some('j' | 'J')) {
                self.pos += 1;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        self.push(TokKind::Number, text);
    }

    fn scan_op(&mut self) -> Result<(), LexError> {
        for op in OPERATORS {
            let len = op.chars().count();
            if self.pos + len <= self.chars.len()
                && self.chars[self.pos..self.pos + len].iter().copied().eq(op.chars())
            {
                self.pos += len;
                match op {
                    "(" | "[" | "{" => self.depth += 1,
                    ")" | "]" | "}" => {
                        if self.depth == 0 {
                            if self.strict {
                                return Err(self.err(format!("unmatched '{op}'")));
                            }
                        } else {
                            self.depth -= 1;
                        }
                    }
                    _ => {}
                }
                self.push(TokKind::Op, op);
                return Ok(());
            }
        }
        let c = self.peek(0).expect("scan_op called with input left");
        if self.strict {
            return Err(self.err(format!("invalid character {c:?}")));
        }
        self.pos += 1;
        self.push(TokKind::Op, c.to_string());
        Ok(())
    }

    fn run(mut self) -> Result<Vec<Token>, LexError> {
        while self.pos < self.chars.len() {
            if self.at_line_start && self.depth == 0 {
                if !self.line_start()? {
                    continue;
                }
                self.at_line_start = false;
            }
            let Some(c) = self.peek(0) else { break };
            match c {
                '\n' => {
                    self.pos += 1;
                    if self.depth == 0 {
                        self.push(TokKind::Newline, "");
                        self.at_line_start = true;
                    }
                    self.line += 1;
                }
                ' ' | '\t' | '\r' | '\x0c' => self.pos += 1,
                '#' => self.skip_comment(),
                '\\' if self.peek(1) == Some('\n') => {
                    self.pos += 2;
                    self.line += 1;
                }
                '\\' if self.peek(1) == Some('\r') && self.peek(2) == Some('\n') => {
                    self.pos += 3;
                    self.line += 1;
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) => {
                    self.scan_number()
                }
                c if c.is_alphabetic() || c == '_' => {
                    if let Some(n) = self.string_prefix_len() {
                        self.scan_string(n)?;
                        continue;
                    }
                    let start = self.pos;
                    while self.peek(0).is_some_and(|c| c.is_alphanumeric() || c == '_') {
                        self.pos += 1;
                    }
                    let word: String = self.chars[start..self.pos].iter().collect();
                    let kind = if is_keyword(&word) {
                        TokKind::Keyword
                    } else {
                        TokKind::Name
                    };
                    self.push(kind, word);
                }
                '\'' | '"' => self.scan_string(0)?,
                _ => self.scan_op()?,
            }
        }
        if self.strict && self.depth > 0 {
            return Err(self.err("unexpected end of input inside brackets"));
        }
        if self
            .tokens
            .last()
            .is_some_and(|t| !matches!(t.kind, TokKind::Newline | TokKind::Dedent | TokKind::Indent))
        {
            self.push(TokKind::Newline, "");
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokKind::Dedent, "");
        }
        self.push(TokKind::EndMarker, "");
        Ok(self.tokens)
    }
}

/// Full token stream with NEWLINE/INDENT/DEDENT layout tokens.
pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    Scanner::new(src, true).run()
}

/// Lexical tokens (identifiers, keywords, literals, operators) for the
/// similarity metrics. Never fails; comments and layout are dropped.
pub fn code_tokens(src: &str) -> Vec<String> {
    Scanner::new(src, false)
        .run()
        .unwrap_or_default()
        .into_iter()
        .filter(|t| matches!(t.kind, TokKind::Name | TokKind::Keyword | TokKind::Number | TokKind::Str | TokKind::Op))
        .map(|t| t.text)
        .collect()
}

use super::{Diagnostic, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Lowercase identifier, possibly dotted (`light.level`). Keywords are
    /// identifiers the parser treats specially.
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    /// `==`, `!=`, `<`, `<=`, `>`, `>=`
    Cmp(&'static str),
    Assign,
    Colon,
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Float(f) => format!("`{f:?}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Cmp(op) => format!("`{op}`"),
            Tok::Assign => "`=`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

/// On-demand tokenizer. The parser asks for regex and JSON literals
/// explicitly, since `/` and `{` only start those in specific positions.
pub struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str) -> Lexer<'a> {
        Lexer { src, pos: 0 }
    }

    pub fn source(&self) -> &'a str {
        self.src
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_trivia(&mut self) {
        loop {
            let rest = self.rest();
            let trimmed = rest.trim_start();
            self.pos += rest.len() - trimmed.len();
            if trimmed.starts_with('#') {
                self.pos += trimmed.find('\n').unwrap_or(trimmed.len());
            } else {
                return;
            }
        }
    }

    fn err(&self, start: usize, end: usize, message: String) -> Diagnostic {
        Diagnostic::error(self.src, Span { start, end }, message)
    }

    /// Position of the next token without consuming it.
    pub fn peek(&mut self) -> Result<(Tok, Span), Diagnostic> {
        let save = self.pos;
        let t = self.next_token();
        self.pos = save;
        t
    }

    pub fn next_token(&mut self) -> Result<(Tok, Span), Diagnostic> {
        self.skip_trivia();
        let start = self.pos;
        let rest = self.rest();
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::Eof, Span { start, end: start }));
        };
        let two = rest.get(..2).unwrap_or("");
        let (tok, len) = match c {
            'a'..='z' => {
                let len = ident_len(rest);
                if rest[len..].starts_with(|c: char| c.is_ascii_uppercase()) {
                    return Err(self.err(
                        start,
                        start + len + 1,
                        "identifiers are lowercase".into(),
                    ));
                }
                (Tok::Ident(rest[..len].to_string()), len)
            }
            'A'..='Z' => {
                let len = rest
                    .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
                    .unwrap_or(rest.len());
                return Err(self.err(
                    start,
                    start + len,
                    "identifiers and keywords are lowercase".into(),
                ));
            }
            '0'..='9' | '-' => return self.number(),
            '"' => return self.string(),
            _ if two == "==" || two == "!=" || two == "<=" || two == ">=" => {
                let op = match two {
                    "==" => "==",
                    "!=" => "!=",
                    "<=" => "<=",
                    _ => ">=",
                };
                (Tok::Cmp(op), 2)
            }
            '<' => (Tok::Cmp("<"), 1),
            '>' => (Tok::Cmp(">"), 1),
            '=' => (Tok::Assign, 1),
            ':' => (Tok::Colon, 1),
            ',' => (Tok::Comma, 1),
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '[' => (Tok::LBracket, 1),
            ']' => (Tok::RBracket, 1),
            other => {
                return Err(self.err(
                    start,
                    start + other.len_utf8(),
                    format!("unexpected character `{other}`"),
                ))
            }
        };
        self.pos += len;
        Ok((
            tok,
            Span {
                start,
                end: self.pos,
            },
        ))
    }

    fn number(&mut self) -> Result<(Tok, Span), Diagnostic> {
        let start = self.pos;
        let bytes = self.rest().as_bytes();
        let mut i = 0;
        if bytes.first() == Some(&b'-') {
            i += 1;
        }
        let digits = |i: &mut usize| {
            let s = *i;
            while bytes.get(*i).is_some_and(u8::is_ascii_digit) {
                *i += 1;
            }
            *i > s
        };
        if !digits(&mut i) {
            return Err(self.err(start, start + i.max(1), "expected a number".into()));
        }
        let mut float = false;
        if bytes.get(i) == Some(&b'.') {
            i += 1;
            float = true;
            if !digits(&mut i) {
                return Err(self.err(start, start + i, "expected digits after `.`".into()));
            }
        }
        if matches!(bytes.get(i), Some(b'e' | b'E')) {
            let mut j = i + 1;
            if matches!(bytes.get(j), Some(b'+' | b'-')) {
                j += 1;
            }
            if digits(&mut j) {
                i = j;
                float = true;
            }
        }
        let text = &self.rest()[..i];
        let span = Span {
            start,
            end: start + i,
        };
        let tok = if float {
            match text.parse::<f64>() {
                Ok(f) if f.is_finite() => Tok::Float(f),
                _ => {
                    return Err(self.err(
                        start,
                        start + i,
                        format!("`{text}` is not a finite number"),
                    ))
                }
            }
        } else {
            match text.parse::<i64>() {
                Ok(n) => Tok::Int(n),
                Err(_) => {
                    return Err(self.err(
                        start,
                        start + i,
                        format!("integer `{text}` is out of range"),
                    ))
                }
            }
        };
        self.pos += i;
        Ok((tok, span))
    }

    fn string(&mut self) -> Result<(Tok, Span), Diagnostic> {
        let start = self.pos;
        let mut out = String::new();
        let mut chars = self.rest().char_indices().skip(1);
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos = start + i + 1;
                    return Ok((
                        Tok::Str(out),
                        Span {
                            start,
                            end: self.pos,
                        },
                    ));
                }
                '\\' => match chars.next() {
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((j, other)) => {
                        return Err(self.err(
                            start + j - 1,
                            start + j + other.len_utf8(),
                            format!("unknown escape `\\{other}`"),
                        ))
                    }
                    None => break,
                },
                '\n' => break,
                c => out.push(c),
            }
        }
        let end = self.rest().find('\n').map_or(self.src.len(), |n| start + n);
        Err(self.err(
            start,
            end.max(start + 1).min(self.src.len()),
            "unterminated string".into(),
        ))
    }

    /// Reads a `/.../` literal; `\/` stands for a slash.
    pub fn regex(&mut self) -> Result<(String, Span), Diagnostic> {
        self.skip_trivia();
        let start = self.pos;
        if !self.rest().starts_with('/') {
            let (tok, span) = self.peek()?;
            return Err(self.err(
                span.start,
                span.end.max(span.start + 1).min(self.src.len().max(1)),
                format!("expected a /regex/ literal, found {}", tok.describe()),
            ));
        }
        let mut out = String::new();
        let mut chars = self.rest().char_indices().skip(1);
        while let Some((i, c)) = chars.next() {
            match c {
                '/' => {
                    self.pos = start + i + 1;
                    return Ok((
                        out,
                        Span {
                            start,
                            end: self.pos,
                        },
                    ));
                }
                '\\' => match chars.next() {
                    Some((_, '/')) => out.push('/'),
                    Some((_, other)) => {
                        out.push('\\');
                        out.push(other);
                    }
                    None => break,
                },
                '\n' => break,
                c => out.push(c),
            }
        }
        Err(self.err(start, start + 1, "unterminated regex literal".into()))
    }

    /// Reads one JSON value starting at the next non-blank character.
    pub fn json(&mut self) -> Result<(serde_json::Value, Span), Diagnostic> {
        self.skip_trivia();
        let start = self.pos;
        let mut stream =
            serde_json::Deserializer::from_str(self.rest()).into_iter::<serde_json::Value>();
        match stream.next() {
            Some(Ok(v)) => {
                self.pos += stream.byte_offset();
                Ok((
                    v,
                    Span {
                        start,
                        end: self.pos,
                    },
                ))
            }
            Some(Err(e)) => {
                let end = (start + 1).min(self.src.len());
                Err(self.err(start, end.max(start), format!("invalid JSON payload: {e}")))
            }
            None => Err(self.err(start, start, "expected a JSON payload".into())),
        }
    }
}

fn ident_len(s: &str) -> usize {
    let bytes = s.as_bytes();
    let mut i = 0;
    loop {
        // segment: [a-z][a-z0-9_]*
        if !bytes.get(i).is_some_and(u8::is_ascii_lowercase) {
            return i;
        }
        i += 1;
        while bytes
            .get(i)
            .is_some_and(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
        {
            i += 1;
        }
        if bytes.get(i) == Some(&b'.') && bytes.get(i + 1).is_some_and(u8::is_ascii_lowercase) {
            i += 1;
        } else {
            return i;
        }
    }
}

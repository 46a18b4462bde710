use super::{ParseDiagnostic, ParseError, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Word(String),
    Str(String),
    Punct(char),
    /// Prolog `:-`
    Neck,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    /// Byte offsets into the line.
    pub start: usize,
    pub end: usize,
}

const PUNCT: &[char] = &[':', '=', ',', '[', ']', '{', '}', '(', ')', '|', '.', '/'];

pub(crate) fn lex(line: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Word(line[start..i].to_string()),
                start,
                end: i,
            });
        } else if c == '"' {
            let start = i;
            i += 1;
            let mut s = String::new();
            let mut closed = false;
            while i < line.len() {
                let ch = line[i..].chars().next().unwrap_or('\0');
                i += ch.len_utf8();
                match ch {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => {
                        let esc = line[i..].chars().next();
                        match esc {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            _ => {
                                return Err(ParseError::at(
                                    SourceSpan::new(line_no, i, i + 1),
                                    "invalid escape in string",
                                ))
                            }
                        }
                        i += esc.map(char::len_utf8).unwrap_or(0);
                    }
                    other => s.push(other),
                }
            }
            if !closed {
                return Err(ParseError::at(
                    SourceSpan::new(line_no, start + 1, line.len() + 1),
                    "unterminated string",
                ));
            }
            out.push(Token {
                tok: Tok::Str(s),
                start,
                end: i,
            });
        } else if c == ':' && bytes.get(i + 1) == Some(&b'-') {
            out.push(Token {
                tok: Tok::Neck,
                start: i,
                end: i + 2,
            });
            i += 2;
        } else if PUNCT.contains(&c) {
            out.push(Token {
                tok: Tok::Punct(c),
                start: i,
                end: i + 1,
            });
            i += 1;
        } else {
            let ch = line[i..].chars().next().unwrap_or('?');
            return Err(ParseError::at(
                SourceSpan::new(line_no, i + 1, i + 1 + ch.len_utf8()),
                format!("unexpected character '{ch}'"),
            ));
        }
    }
    Ok(out)
}

/// Token cursor over one line.
pub(crate) struct Cursor<'a> {
    line: &'a str,
    line_no: usize,
    toks: Vec<Token>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(line: &'a str, line_no: usize) -> Result<Self, ParseError> {
        Ok(Self {
            line,
            line_no,
            toks: lex(line, line_no)?,
            pos: 0,
        })
    }

    pub fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    /// Span of the current token, or an end-of-line span.
    pub fn span_here(&self) -> SourceSpan {
        match self.peek() {
            Some(t) => self.span_of(t),
            None => SourceSpan::new(self.line_no, self.line.len() + 1, self.line.len() + 1),
        }
    }

    pub fn span_of(&self, t: &Token) -> SourceSpan {
        SourceSpan::new(self.line_no, t.start + 1, t.end + 1)
    }

    pub fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::at(self.span_here(), message)
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of line".to_string(),
            Some(t) => match &t.tok {
                Tok::Word(w) => format!("'{w}'"),
                Tok::Str(_) => "string".to_string(),
                Tok::Punct(c) => format!("'{c}'"),
                Tok::Neck => "':-'".to_string(),
            },
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Word(w), .. }) if w.eq_ignore_ascii_case(kw))
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected {kw}, found {}", self.describe())))
        }
    }

    pub fn is_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(p), .. }) if *p == c)
    }

    pub fn eat_punct(&mut self, c: char) -> bool {
        if self.is_punct(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}', found {}", self.describe())))
        }
    }

    /// An identifier: ASCII letter or underscore, then letters, digits or
    /// underscores.
    pub fn expect_ident(&mut self, what: &str) -> Result<(String, SourceSpan), ParseError> {
        match self.peek().cloned() {
            Some(t) => match &t.tok {
                Tok::Word(w) if is_ident(w) => {
                    self.pos += 1;
                    Ok((w.clone(), self.span_of(&t)))
                }
                _ => Err(self.error(format!("expected {what}, found {}", self.describe()))),
            },
            None => Err(self.error(format!("expected {what}, found end of line"))),
        }
    }

    pub fn expect_uint(&mut self, what: &str) -> Result<u64, ParseError> {
        match self.peek().cloned() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) if w.bytes().all(|b| b.is_ascii_digit()) => {
                let n = w
                    .parse()
                    .map_err(|_| self.error(format!("{what} out of range")))?;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.error(format!("expected {what}, found {}", self.describe()))),
        }
    }

    pub fn expect_string(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().cloned() {
            Some(Token {
                tok: Tok::Str(s), ..
            }) => {
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error(format!("expected {what}, found {}", self.describe()))),
        }
    }

    pub fn eat_string(&mut self) -> Option<String> {
        match self.peek().cloned() {
            Some(Token {
                tok: Tok::Str(s), ..
            }) => {
                self.pos += 1;
                Some(s)
            }
            _ => None,
        }
    }

    pub fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error(format!("unexpected {} after statement", self.describe())))
        }
    }
}

pub(crate) fn is_ident(w: &str) -> bool {
    let mut chars = w.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl ParseError {
    pub(crate) fn at(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError(ParseDiagnostic::error(span, message))
    }
}

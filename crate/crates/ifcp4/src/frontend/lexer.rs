//! Tokens shared by the program, policy, contract and state formats.

use std::fmt;

use super::FrontendError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Literal with an optional explicit width (`8w10`).
    Num {
        width: Option<u32>,
        value: u64,
    },
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num {
                width: Some(w),
                value,
            } => write!(f, "`{w}w{value}`"),
            Tok::Num { width: None, value } => write!(f, "`{value}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

/// Longest first so that `<=` wins over `<`.
const PUNCTS: &[&str] = &[
    "^L", "^H", "->", ":=", "==", "!=", "<=", ">=", "&&", "||", "↦", "·", "ᴸ", "ᴴ", "{", "}", "(",
    ")", "[", "]", "<", ">", ";", ":", ",", ".", "=", "+", "-", "&", "|", "^", "~", "!", "*", "_",
];

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '$'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

pub fn lex(text: &str) -> Result<Vec<Token>, FrontendError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i].1 == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i].1;
        let rest = &text[chars[i].0..];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if rest.starts_with("//") || rest.starts_with('#') {
            while i < chars.len() && chars[i].1 != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if rest.starts_with("/*") {
            let Some(end) = rest.find("*/") else {
                return Err(FrontendError::syntax(
                    line,
                    col,
                    "end of comment",
                    "end of input",
                ));
            };
            let n = rest[..end + 2].chars().count();
            advance(&mut i, &mut line, &mut col, n);
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_ascii_digit() {
            let n = rest
                .find(|ch: char| !ch.is_ascii_alphanumeric())
                .unwrap_or(rest.len());
            let word = &rest[..n];
            let tok = number(word)
                .ok_or_else(|| FrontendError::syntax(tl, tc, "a number", &format!("`{word}`")))?;
            out.push(Token {
                tok,
                line: tl,
                col: tc,
            });
            advance(&mut i, &mut line, &mut col, word.chars().count());
            continue;
        }
        if is_ident_start(c) || (c == '_' && rest[1..].starts_with(is_ident_char)) {
            let n = rest
                .find(|ch: char| !is_ident_char(ch))
                .unwrap_or(rest.len());
            out.push(Token {
                tok: Tok::Ident(rest[..n].to_string()),
                line: tl,
                col: tc,
            });
            advance(&mut i, &mut line, &mut col, rest[..n].chars().count());
            continue;
        }
        let label_ok = |p: &str| {
            !(p.starts_with('^')
                && rest[p.len()..].starts_with(|ch: char| ch.is_ascii_alphanumeric()))
        };
        match PUNCTS.iter().find(|p| rest.starts_with(**p) && label_ok(p)) {
            Some(p) => {
                out.push(Token {
                    tok: Tok::Punct(p),
                    line: tl,
                    col: tc,
                });
                advance(&mut i, &mut line, &mut col, p.chars().count());
            }
            None => return Err(FrontendError::syntax(tl, tc, "a token", &format!("`{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

fn number(word: &str) -> Option<Tok> {
    let (width, digits) = match word.find('w') {
        Some(k) if !word.starts_with("0x") && !word.starts_with("0b") => {
            let w: u32 = word[..k].parse().ok()?;
            (Some(w), &word[k + 1..])
        }
        _ => (None, word),
    };
    let clean = digits.replace('_', "");
    let value = if let Some(h) = clean.strip_prefix("0x") {
        u64::from_str_radix(h, 16).ok()?
    } else if let Some(b) = clean.strip_prefix("0b") {
        u64::from_str_radix(b, 2).ok()?
    } else {
        clean.parse().ok()?
    };
    Some(Tok::Num { width, value })
}

/// Cursor over a token list.
pub struct Cursor {
    toks: Vec<Token>,
    pos: usize,
}

impl Cursor {
    pub fn new(toks: Vec<Token>) -> Cursor {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    pub fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    pub fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    pub fn is(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    pub fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    pub fn eat(&mut self, p: &str) -> bool {
        if self.is(p) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn error(&self, expected: &str) -> FrontendError {
        let (l, c) = self.here();
        FrontendError::syntax(l, c, expected, &self.peek().to_string())
    }

    pub fn expect(&mut self, p: &str) -> Result<(), FrontendError> {
        if self.eat(p) {
            Ok(())
        } else {
            Err(self.error(&format!("`{p}`")))
        }
    }

    pub fn expect_word(&mut self, w: &str) -> Result<(), FrontendError> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err(self.error(&format!("`{w}`")))
        }
    }

    pub fn ident(&mut self) -> Result<String, FrontendError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            _ => Err(self.error("an identifier")),
        }
    }

    pub fn number(&mut self) -> Result<(Option<u32>, u64), FrontendError> {
        match *self.peek() {
            Tok::Num { width, value } => {
                self.next();
                Ok((width, value))
            }
            _ => Err(self.error("a number")),
        }
    }

    /// A plain decimal such as a width or a bit index.
    pub fn small(&mut self) -> Result<u32, FrontendError> {
        match *self.peek() {
            Tok::Num { width: None, value } if value <= u32::MAX as u64 => {
                self.next();
                Ok(value as u32)
            }
            _ => Err(self.error("a small number")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers() {
        assert_eq!(
            toks("8w10")[0],
            Tok::Num {
                width: Some(8),
                value: 10
            }
        );
        assert_eq!(
            toks("0x0800")[0],
            Tok::Num {
                width: None,
                value: 2048
            }
        );
        assert_eq!(
            toks("0b101")[0],
            Tok::Num {
                width: None,
                value: 5
            }
        );
        assert_eq!(
            toks("16w0x800")[0],
            Tok::Num {
                width: Some(16),
                value: 2048
            }
        );
    }

    #[test]
    fn punctuation_prefers_longest() {
        assert_eq!(toks("a<=b")[1], Tok::Punct("<="));
        assert_eq!(toks("[0]^H_1")[3], Tok::Punct("^H"));
        assert_eq!(toks("x ↦ [*]ᴸ · [0]ᴴ")[1], Tok::Punct("↦"));
    }

    #[test]
    fn comments_and_positions() {
        let t = lex("// c\n/* x\n */ foo").unwrap();
        assert_eq!((t[0].line, t[0].col), (3, 5));
        assert!(lex("/* open").is_err());
        assert!(lex("a @ b").is_err());
    }

    #[test]
    fn dollar_identifiers() {
        assert_eq!(toks("h.$valid")[2], Tok::Ident("$valid".into()));
    }
}

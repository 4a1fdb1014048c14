use crate::time::{Duration, DurationUnit};

use super::{Comparator, Diagnostic, Loc};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Duration(Duration),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Semi,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Cmp(Comparator),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Duration(d) => format!("duration {d}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::LBrace => "`{`".to_string(),
            Tok::RBrace => "`}`".to_string(),
            Tok::LParen => "`(`".to_string(),
            Tok::RParen => "`)`".to_string(),
            Tok::Colon => "`:`".to_string(),
            Tok::Semi => "`;`".to_string(),
            Tok::Comma => "`,`".to_string(),
            Tok::Plus => "`+`".to_string(),
            Tok::Minus => "`-`".to_string(),
            Tok::Star => "`*`".to_string(),
            Tok::Slash => "`/`".to_string(),
            Tok::Cmp(c) => format!("`{c}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub loc: Loc,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl Lexer<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn loc(&self) -> Loc {
        Loc::new(self.line, self.column)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            out.push(c);
            self.bump();
        }
        out
    }
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits source text into tokens. Lexical errors are collected and lexing
/// continues after the offending character.
pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, Vec<Diagnostic>> {
    let mut lx = Lexer {
        chars: text.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();
    let mut errors = Vec::new();

    while let Some(c) = lx.peek() {
        let loc = lx.loc();
        if c.is_whitespace() {
            lx.bump();
            continue;
        }
        if c == '#' {
            while let Some(c) = lx.peek() {
                if c == '\n' {
                    break;
                }
                lx.bump();
            }
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ':' => Some(Tok::Colon),
            ';' => Some(Tok::Semi),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            _ => None,
        };
        if let Some(tok) = single {
            lx.bump();
            tokens.push(Token { tok, loc });
            continue;
        }
        match c {
            '<' | '>' | '=' => {
                lx.bump();
                let eq = lx.peek() == Some('=');
                if eq {
                    lx.bump();
                }
                let cmp = match (c, eq) {
                    ('<', true) => Comparator::Le,
                    ('>', true) => Comparator::Ge,
                    ('<', false) => Comparator::Lt,
                    ('>', false) => Comparator::Gt,
                    ('=', true) => Comparator::Eq,
                    _ => {
                        errors.push(Diagnostic::error(
                            "E-LEX",
                            loc,
                            "unexpected `=`; did you mean `==`?",
                        ));
                        continue;
                    }
                };
                tokens.push(Token {
                    tok: Tok::Cmp(cmp),
                    loc,
                });
            }
            '"' => {
                lx.bump();
                match lex_string(&mut lx) {
                    Ok(s) => tokens.push(Token {
                        tok: Tok::Str(s),
                        loc,
                    }),
                    Err(msg) => errors.push(Diagnostic::error("E-LEX", loc, msg)),
                }
            }
            c if c.is_ascii_digit() => match lex_number(&mut lx) {
                Ok(tok) => tokens.push(Token { tok, loc }),
                Err(msg) => errors.push(Diagnostic::error("E-LEX", loc, msg)),
            },
            c if c.is_ascii_alphabetic() => {
                let word = lx.take_while(is_ident_continue);
                tokens.push(Token {
                    tok: Tok::Ident(word),
                    loc,
                });
            }
            other => {
                lx.bump();
                errors.push(Diagnostic::error(
                    "E-LEX",
                    loc,
                    format!("unknown character {other:?}"),
                ));
            }
        }
    }

    if errors.is_empty() {
        tokens.push(Token {
            tok: Tok::Eof,
            loc: lx.loc(),
        });
        Ok(tokens)
    } else {
        Err(errors)
    }
}

fn lex_string(lx: &mut Lexer<'_>) -> Result<String, String> {
    let mut out = String::new();
    loop {
        match lx.bump() {
            None | Some('\n') => return Err("unterminated string literal".to_string()),
            Some('"') => return Ok(out),
            Some('\\') => match lx.bump() {
                Some('"') => out.push('"'),
                Some('\\') => out.push('\\'),
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some(other) => return Err(format!("unknown escape `\\{other}`")),
                None => return Err("unterminated string literal".to_string()),
            },
            Some(c) => out.push(c),
        }
    }
}

fn lex_number(lx: &mut Lexer<'_>) -> Result<Tok, String> {
    let int_part = lx.take_while(|c| c.is_ascii_digit());
    if let Some(c) = lx.peek() {
        if let Some(unit) = DurationUnit::from_suffix(c) {
            lx.bump();
            let trailing = lx.take_while(is_ident_continue);
            if !trailing.is_empty() {
                return Err(format!("invalid duration `{int_part}{c}{trailing}`"));
            }
            let magnitude: u32 = int_part
                .parse()
                .map_err(|_| format!("duration `{int_part}{c}` is too large"))?;
            return Duration::new(magnitude, unit)
                .map(Tok::Duration)
                .map_err(|e| e.to_string());
        }
    }
    let mut text = int_part;
    if lx.peek() == Some('.') {
        lx.bump();
        let frac = lx.take_while(|c| c.is_ascii_digit());
        if frac.is_empty() {
            return Err(format!("expected digits after `{text}.`"));
        }
        text.push('.');
        text.push_str(&frac);
    }
    let trailing = lx.take_while(is_ident_continue);
    if !trailing.is_empty() {
        return Err(format!("invalid number literal `{text}{trailing}`"));
    }
    let value: f64 = text
        .parse()
        .map_err(|_| format!("invalid number literal `{text}`"))?;
    if !value.is_finite() {
        return Err(format!("number `{text}` is out of range"));
    }
    Ok(Tok::Number(value))
}

//! Tokenizer. Keywords are case-insensitive; `--` starts a line comment.

use super::ast::Span;
use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kw {
    Select,
    As,
    From,
    Where,
    Join,
    Union,
    Rename,
    Dedup,
    Duplicate,
    Times,
    With,
    Group,
    By,
    Aggregating,
    Generate,
    Under,
    Limit,
    Generative,
    Given,
    Probability,
    Density,
    Of,
    Mutual,
    Info,
    Except,
    And,
    Or,
    Null,
    True,
    False,
}

const KEYWORDS: &[(&str, Kw)] = &[
    ("SELECT", Kw::Select),
    ("AS", Kw::As),
    ("FROM", Kw::From),
    ("WHERE", Kw::Where),
    ("JOIN", Kw::Join),
    ("UNION", Kw::Union),
    ("RENAME", Kw::Rename),
    ("DEDUP", Kw::Dedup),
    ("DUPLICATE", Kw::Duplicate),
    ("TIMES", Kw::Times),
    ("WITH", Kw::With),
    ("GROUP", Kw::Group),
    ("BY", Kw::By),
    ("AGGREGATING", Kw::Aggregating),
    ("GENERATE", Kw::Generate),
    ("UNDER", Kw::Under),
    ("LIMIT", Kw::Limit),
    ("GENERATIVE", Kw::Generative),
    ("GIVEN", Kw::Given),
    ("PROBABILITY", Kw::Probability),
    ("DENSITY", Kw::Density),
    ("OF", Kw::Of),
    ("MUTUAL", Kw::Mutual),
    ("INFO", Kw::Info),
    ("EXCEPT", Kw::Except),
    ("AND", Kw::And),
    ("OR", Kw::Or),
    ("NULL", Kw::Null),
    ("TRUE", Kw::True),
    ("FALSE", Kw::False),
];

impl Kw {
    pub fn text(self) -> &'static str {
        KEYWORDS.iter().find(|(_, k)| *k == self).map(|(s, _)| *s).unwrap_or("?")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Kw(Kw),
    Ident(String),
    Int(i64),
    Real(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Kw(k) => k.text().to_string(),
            Tok::Ident(s) => format!("identifier {s}"),
            Tok::Int(n) => format!("number {n}"),
            Tok::Real(x) => format!("number {x}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

const SYMBOLS: &[&str] = &["<=", ">=", "<>", "!=", "(", ")", ",", ".", ":", ";", "[", "]", "+", "-", "*", "/", "=", "<", ">"];

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut line_start = 0usize;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let col = (src[line_start..i].chars().count() + 1) as u32;
        let start_line = line;
        let span = |end: usize| Span { start, end, line: start_line, col };
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &src[start..i];
            let upper = word.to_ascii_uppercase();
            let tok = match KEYWORDS.iter().find(|(k, _)| *k == upper) {
                Some((_, kw)) => Tok::Kw(*kw),
                None => Tok::Ident(word.to_string()),
            };
            out.push(Token { tok, span: span(i) });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut is_real = false;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                is_real = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    is_real = true;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let tok = if is_real {
                Tok::Real(text.parse().map_err(|_| lex_error(span(i), format!("bad number {text}")))?)
            } else {
                Tok::Int(text.parse().map_err(|_| lex_error(span(i), format!("integer {text} out of range")))?)
            };
            out.push(Token { tok, span: span(i) });
            continue;
        }
        if c == b'"' || c == b'\'' {
            let quote = c;
            i += 1;
            let mut s = String::new();
            loop {
                if i >= bytes.len() {
                    return Err(lex_error(span(i), "unterminated string literal".into()));
                }
                if bytes[i] == quote {
                    if bytes.get(i + 1) == Some(&quote) {
                        s.push(quote as char);
                        i += 2;
                        continue;
                    }
                    i += 1;
                    break;
                }
                let ch = src[i..].chars().next().unwrap_or('\0');
                if ch == '\n' {
                    line += 1;
                    line_start = i + 1;
                }
                s.push(ch);
                i += ch.len_utf8();
            }
            out.push(Token { tok: Tok::Str(s), span: span(i) });
            continue;
        }
        match SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            Some(sym) => {
                i += sym.len();
                out.push(Token { tok: Tok::Sym(sym), span: span(i) });
            }
            None => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(lex_error(span(i + 1), format!("unexpected character {ch:?}")));
            }
        }
    }
    let col = (src[line_start..].chars().count() + 1) as u32;
    out.push(Token { tok: Tok::Eof, span: Span { start: src.len(), end: src.len(), line, col } });
    Ok(out)
}

fn lex_error(span: Span, message: String) -> ParseError {
    ParseError { message, line: span.line, col: span.col, expected: Vec::new() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keywords_case_insensitive_identifiers_not() {
        let t = tokenize("select Foo from foo -- comment\nWHERE").unwrap();
        let toks: Vec<_> = t.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            toks,
            vec![
                Tok::Kw(Kw::Select),
                Tok::Ident("Foo".into()),
                Tok::Kw(Kw::From),
                Tok::Ident("foo".into()),
                Tok::Kw(Kw::Where),
                Tok::Eof
            ]
        );
        assert_eq!(t[4].span.line, 2);
    }

    #[test]
    fn numbers_and_strings() {
        let t = tokenize("10 0.5 1e-3 \"a b\" 'it''s' <= <>").unwrap();
        let toks: Vec<_> = t.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(toks[0], Tok::Int(10));
        assert_eq!(toks[1], Tok::Real(0.5));
        assert_eq!(toks[2], Tok::Real(1e-3));
        assert_eq!(toks[3], Tok::Str("a b".into()));
        assert_eq!(toks[4], Tok::Str("it's".into()));
        assert_eq!(toks[5], Tok::Sym("<="));
        assert_eq!(toks[6], Tok::Sym("<>"));
    }

    #[test]
    fn reports_position() {
        let e = tokenize("SELECT\n  #").unwrap_err();
        assert_eq!((e.line, e.col), (2, 3));
    }
}

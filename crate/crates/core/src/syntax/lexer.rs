use alloc::string::String;
use alloc::vec::Vec;

use super::parser::{Span, SyntaxError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    /// Lower-case identifier (variables, functions, locations, regions).
    Ident(String),
    /// Capitalised identifier (types and constructors).
    Con(String),
    /// Unsigned magnitude; the parser applies any leading minus.
    Int(u64),
    Kw(Kw),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kw {
    Data,
    Fun,
    Main,
    Forall,
    Letregion,
    Letloc,
    Let,
    In,
    Spawn,
    Case,
    Of,
    If,
    Then,
    Else,
    Start,
    After,
    Ind,
    Int,
}

const KEYWORDS: &[(&str, Kw)] = &[
    ("data", Kw::Data),
    ("fun", Kw::Fun),
    ("main", Kw::Main),
    ("forall", Kw::Forall),
    ("letregion", Kw::Letregion),
    ("letloc", Kw::Letloc),
    ("let", Kw::Let),
    ("in", Kw::In),
    ("spawn", Kw::Spawn),
    ("case", Kw::Case),
    ("of", Kw::Of),
    ("if", Kw::If),
    ("then", Kw::Then),
    ("else", Kw::Else),
    ("start", Kw::Start),
    ("after", Kw::After),
    ("ind", Kw::Ind),
    ("Int", Kw::Int),
];

// Longest first, so `->` wins over `-` and `<=` over `<`.
const SYMBOLS: &[&str] = &[
    "->", "<=", "==", "@", "[", "]", "(", ")", "{", "}", ";", ":", "=", "+", "-", "*", "|", ".",
    "<", ">", ",", "^", "?",
];

pub(crate) fn lex(src: &str) -> Result<Vec<(Tok, Span)>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let span = Span { line, col };
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let text = &src[start..i];
            let n = text
                .parse::<u64>()
                .map_err(|_| SyntaxError::new(span, "integer literal out of range"))?;
            col += (i - start) as u32;
            out.push((Tok::Int(n), span));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'\'')
            {
                i += 1;
            }
            let text = &src[start..i];
            col += (i - start) as u32;
            let tok = match KEYWORDS.iter().find(|(k, _)| *k == text) {
                Some((_, kw)) => Tok::Kw(*kw),
                None if c.is_ascii_uppercase() => Tok::Con(String::from(text)),
                None => Tok::Ident(String::from(text)),
            };
            out.push((tok, span));
            continue;
        }
        match SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len() as u32;
                out.push((Tok::Sym(s), span));
            }
            None => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(SyntaxError::new(
                    span,
                    &alloc::format!("unexpected character `{ch}`"),
                ));
            }
        }
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

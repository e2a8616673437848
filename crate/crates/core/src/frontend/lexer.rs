use crate::diag::{DiagClass, Diagnostic, Span};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    /// `%name`
    Value(String),
    /// `@name`
    Func(String),
    Ident(String),
    /// Decimal integer literal (sign handled by the parser).
    Int(u64),
    /// Digit-led word such as `8x8xi32`.
    ShapeWord(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Comma,
    Colon,
    Eq,
    Minus,
    Arrow,
    Bang,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Value(n) => format!("'%{n}'"),
            Tok::Func(n) => format!("'@{n}'"),
            Tok::Ident(n) => format!("'{n}'"),
            Tok::Int(v) => format!("'{v}'"),
            Tok::ShapeWord(w) => format!("'{w}'"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::Lt => "'<'".into(),
            Tok::Gt => "'>'".into(),
            Tok::Comma => "','".into(),
            Tok::Colon => "':'".into(),
            Tok::Eq => "'='".into(),
            Tok::Minus => "'-'".into(),
            Tok::Arrow => "'->'".into(),
            Tok::Bang => "'!'".into(),
            Tok::Eof => "end of file".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

/// Splits UTF-8 source into tokens. `//` starts a comment running to end of line.
pub fn lex(src: &str, file: &Arc<str>) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut toks = Vec::new();
    let mut diags = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    while i < chars.len() {
        let c = chars[i];
        let (sl, sc) = (line, col);
        let span_to = |l: u32, c: u32| Span::new(file.clone(), sl, sc, l, c);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '<' => Some(Tok::Lt),
            '>' => Some(Tok::Gt),
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            '=' => Some(Tok::Eq),
            '!' => Some(Tok::Bang),
            _ => None,
        };
        if let Some(tok) = single {
            toks.push(Token { tok, span: span_to(line, col) });
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' {
            if chars.get(i + 1) == Some(&'>') {
                toks.push(Token { tok: Tok::Arrow, span: span_to(line, col + 1) });
                i += 2;
                col += 2;
            } else {
                toks.push(Token { tok: Tok::Minus, span: span_to(line, col) });
                i += 1;
                col += 1;
            }
            continue;
        }
        if c == '%' || c == '@' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && is_word_char(chars[j]) {
                j += 1;
            }
            let word: String = chars[start..j].iter().collect();
            let width = (j - i) as u32;
            if word.is_empty() {
                diags.push(Diagnostic::error(DiagClass::LexError, span_to(line, col), format!("expected a name after '{c}'")));
            } else {
                let tok = if c == '%' { Tok::Value(word) } else { Tok::Func(word) };
                toks.push(Token { tok, span: span_to(line, col + width - 1) });
            }
            col += width;
            i = j;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && is_word_char(chars[j]) {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            let width = (j - i) as u32;
            toks.push(Token { tok: Tok::Ident(word), span: span_to(line, col + width - 1) });
            col += width;
            i = j;
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            let width = (j - i) as u32;
            let span = span_to(line, col + width - 1);
            if word.chars().all(|c| c.is_ascii_digit()) {
                match word.parse::<u64>() {
                    Ok(v) => toks.push(Token { tok: Tok::Int(v), span }),
                    Err(_) => diags.push(Diagnostic::error(DiagClass::LexError, span, format!("integer literal '{word}' is too large"))),
                }
            } else {
                toks.push(Token { tok: Tok::ShapeWord(word), span });
            }
            col += width;
            i = j;
            continue;
        }
        diags.push(Diagnostic::error(DiagClass::LexError, span_to(line, col), format!("unexpected character '{c}'")));
        i += 1;
        col += 1;
    }
    toks.push(Token { tok: Tok::Eof, span: Span::new(file.clone(), line, col, line, col) });
    (toks, diags)
}

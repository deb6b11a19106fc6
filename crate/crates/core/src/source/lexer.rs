//! Span-preserving tokenizer for Dafny source.
//!
//! Only as much lexical structure as brace matching and clause extraction
//! need: identifiers, literals, delimiters and operator runs. Comments and
//! whitespace never produce tokens. Lexing is total: malformed input yields
//! tokens plus [`LexIssue`]s, never an error.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Char,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    /// Operator or other punctuation, possibly multi-character (`==>`, `::`).
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Range<usize>,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.span.clone()]
    }

    pub fn is_open(&self) -> bool {
        matches!(
            self.kind,
            TokenKind::LParen | TokenKind::LBracket | TokenKind::LBrace
        )
    }

    pub fn is_close(&self) -> bool {
        matches!(
            self.kind,
            TokenKind::RParen | TokenKind::RBracket | TokenKind::RBrace
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexIssue {
    UnterminatedComment { start: usize },
    UnterminatedString { start: usize },
}

// Longest first.
const OPERATORS: &[&str] = &[
    "<==>", "==>", "<==", "!in", "::", "==", "!=", "<=", ">=", "&&", "||", "=>", ":=", "..", "!!",
    "-=", "+=", ":|",
];

pub fn tokenize(src: &str) -> (Vec<Token>, Vec<LexIssue>) {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut issues = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            match skip_block_comment(bytes, i) {
                Some(end) => i = end,
                None => {
                    issues.push(LexIssue::UnterminatedComment { start: i });
                    i = bytes.len();
                }
            }
            continue;
        }
        let start = i;
        if b == b'@' && bytes.get(i + 1) == Some(&b'"') {
            let (end, closed) = scan_verbatim_string(bytes, i + 2);
            if !closed {
                issues.push(LexIssue::UnterminatedString { start });
            }
            tokens.push(tok(TokenKind::Str, start, end));
            i = end;
            continue;
        }
        if b == b'"' {
            let (end, closed) = scan_string(bytes, i + 1);
            if !closed {
                issues.push(LexIssue::UnterminatedString { start });
            }
            tokens.push(tok(TokenKind::Str, start, end));
            i = end;
            continue;
        }
        if b == b'\'' {
            if let Some(end) = scan_char(bytes, i) {
                tokens.push(tok(TokenKind::Char, start, end));
                i = end;
                continue;
            }
            tokens.push(tok(TokenKind::Punct, start, i + 1));
            i += 1;
            continue;
        }
        if is_ident_start(b) || unicode_letter_width(src, i).is_some() {
            i += unicode_letter_width(src, i).unwrap_or(1);
            while i < bytes.len() {
                if is_ident_continue(bytes[i]) {
                    i += 1;
                } else if let Some(w) = unicode_letter_width(src, i) {
                    i += w;
                } else {
                    break;
                }
            }
            tokens.push(tok(TokenKind::Ident, start, i));
            continue;
        }
        if b.is_ascii_digit() {
            i = scan_number(bytes, i);
            tokens.push(tok(TokenKind::Number, start, i));
            continue;
        }
        let single = match b {
            b'(' => Some(TokenKind::LParen),
            b')' => Some(TokenKind::RParen),
            b'[' => Some(TokenKind::LBracket),
            b']' => Some(TokenKind::RBracket),
            b'{' => Some(TokenKind::LBrace),
            b'}' => Some(TokenKind::RBrace),
            _ => None,
        };
        if let Some(kind) = single {
            tokens.push(tok(kind, i, i + 1));
            i += 1;
            continue;
        }
        if let Some(op) = OPERATORS
            .iter()
            .find(|op| bytes[i..].starts_with(op.as_bytes()))
        {
            // `!in` only when it is not the prefix of an identifier like `!inside`.
            let end = i + op.len();
            if *op != "!in" || bytes.get(end).is_none_or(|c| !is_ident_continue(*c)) {
                tokens.push(tok(TokenKind::Punct, i, end));
                i = end;
                continue;
            }
        }
        // Any other byte (including multi-byte UTF-8) is one punctuation token
        // covering the full character.
        let width = utf8_width(b);
        let end = (i + width).min(bytes.len());
        tokens.push(tok(TokenKind::Punct, i, end));
        i = end;
    }
    (tokens, issues)
}

fn tok(kind: TokenKind, start: usize, end: usize) -> Token {
    Token {
        kind,
        span: start..end,
    }
}

fn utf8_width(b: u8) -> usize {
    match b {
        0xC0..=0xDF => 2,
        0xE0..=0xEF => 3,
        0xF0..=0xF7 => 4,
        _ => 1,
    }
}

/// Width of a non-ASCII alphabetic character at `i`, which Dafny accepts in
/// identifiers.
fn unicode_letter_width(src: &str, i: usize) -> Option<usize> {
    if src.as_bytes()[i].is_ascii() {
        return None;
    }
    let c = src.get(i..)?.chars().next()?;
    c.is_alphabetic().then(|| c.len_utf8())
}

pub fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

pub fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'\'' || b == b'?'
}

/// Dafny block comments nest.
fn skip_block_comment(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = start;
    while i + 1 < bytes.len() {
        if bytes[i] == b'/' && bytes[i + 1] == b'*' {
            depth += 1;
            i += 2;
        } else if bytes[i] == b'*' && bytes[i + 1] == b'/' {
            depth -= 1;
            i += 2;
            if depth == 0 {
                return Some(i);
            }
        } else {
            i += 1;
        }
    }
    None
}

/// Regular strings cannot span lines; an unterminated one stops at the newline.
fn scan_string(bytes: &[u8], mut i: usize) -> (usize, bool) {
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return (i + 1, true),
            b'\n' => return (i, false),
            _ => i += 1,
        }
    }
    (bytes.len(), false)
}

fn scan_verbatim_string(bytes: &[u8], mut i: usize) -> (usize, bool) {
    while i < bytes.len() {
        if bytes[i] == b'"' {
            if bytes.get(i + 1) == Some(&b'"') {
                i += 2;
                continue;
            }
            return (i + 1, true);
        }
        i += 1;
    }
    (bytes.len(), false)
}

fn scan_char(bytes: &[u8], start: usize) -> Option<usize> {
    let mut i = start + 1;
    match *bytes.get(i)? {
        b'\\' => {
            i += 1;
            if bytes.get(i) == Some(&b'u') && bytes.get(i + 1) == Some(&b'{') {
                while i < bytes.len() && bytes[i] != b'}' && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            i += 1;
        }
        b'\n' | b'\'' => return None,
        c => i += utf8_width(c),
    }
    (bytes.get(i) == Some(&b'\'')).then_some(i + 1)
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    if bytes[i] == b'0' && matches!(bytes.get(i + 1), Some(b'x') | Some(b'X')) {
        i += 2;
        while i < bytes.len() && (bytes[i].is_ascii_hexdigit() || bytes[i] == b'_') {
            i += 1;
        }
        return i;
    }
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
        i += 1;
    }
    // `1.5` is a real literal, `a[1..2]` is a slice.
    if bytes.get(i) == Some(&b'.') && bytes.get(i + 1).is_some_and(|c| c.is_ascii_digit()) {
        i += 1;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
            i += 1;
        }
    }
    i
}

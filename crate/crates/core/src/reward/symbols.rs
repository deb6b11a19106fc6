//! Lexical free-identifier scan of clause expressions.
//!
//! Over-approximates binding (a name bound anywhere in the expression is
//! treated as bound everywhere). The scan only needs to catch clauses that
//! mention names the comparison lemmas cannot bind, such as a result name
//! inside a precondition; the verifier does real resolution.

use std::collections::BTreeSet;

use crate::source::lexer::{tokenize, Token, TokenKind};

const RESERVED: &[&str] = &[
    "true", "false", "null", "this", "old", "fresh", "unchanged", "allocated", "forall", "exists",
    "in", "if", "then", "else", "var", "match", "case", "set", "iset", "map", "imap", "seq",
    "multiset", "as", "is", "int", "nat", "bool", "real", "char", "string", "object", "array",
    "array2", "array3", "ORDINAL", "bv8", "bv16", "bv32", "bv64", "bv128", "new", "label", "assert",
    "assume", "expect", "calc", "reveal", "ghost", "function", "predicate", "by", "_",
];

/// Tokens that start a binder list ending at `::` or `|`.
const BINDER_WORDS: &[&str] = &["forall", "exists", "set", "iset", "map", "imap"];

fn is_attribute_open(toks: &[Token], src: &str, i: usize) -> bool {
    toks[i].kind == TokenKind::LBrace && toks.get(i + 1).is_some_and(|t| t.text(src) == ":")
}

/// Index just past the group opened at `open`, counting all bracket kinds.
fn skip_group(toks: &[Token], open: usize) -> usize {
    let mut depth = 0usize;
    for (k, t) in toks.iter().enumerate().skip(open) {
        if t.is_open() {
            depth += 1;
        } else if t.is_close() {
            depth = depth.saturating_sub(1);
            if depth == 0 {
                return k + 1;
            }
        }
    }
    toks.len()
}

fn bound_names(toks: &[Token], src: &str) -> BTreeSet<String> {
    let mut bound = BTreeSet::new();
    let text = |i: usize| toks.get(i).map_or("", |t| t.text(src));
    for i in 0..toks.len() {
        let w = text(i);
        if BINDER_WORDS.contains(&w) && toks.get(i + 1).is_some_and(|t| t.kind == TokenKind::Ident) {
            let mut k = i + 1;
            while k < toks.len() && !matches!(text(k), "::" | "|" | "{") {
                if toks[k].kind == TokenKind::Ident {
                    bound.insert(text(k).to_string());
                }
                k += 1;
            }
        } else if w == "var" || w == "case" {
            let mut k = i + 1;
            while k < toks.len() && !matches!(text(k), ":=" | ":|" | "=>" | ";") {
                if toks[k].kind == TokenKind::Ident {
                    bound.insert(text(k).to_string());
                }
                k += 1;
            }
        } else if w == "=>" && i > 0 {
            match toks[i - 1].kind {
                TokenKind::Ident => {
                    bound.insert(text(i - 1).to_string());
                }
                TokenKind::RParen => {
                    let mut depth = 0usize;
                    for k in (0..i).rev() {
                        match toks[k].kind {
                            TokenKind::RParen => depth += 1,
                            TokenKind::LParen => {
                                depth -= 1;
                                if depth == 0 {
                                    break;
                                }
                            }
                            TokenKind::Ident => {
                                bound.insert(text(k).to_string());
                            }
                            _ => {}
                        }
                    }
                }
                _ => {}
            }
        }
    }
    bound
}

/// Identifiers in `expr` that are neither bound inside it, reserved, reached
/// through `.`, nor in `known`. Sorted and deduplicated.
pub fn unbound_names(expr: &str, known: &BTreeSet<String>) -> Vec<String> {
    let (toks, _) = tokenize(expr);
    let bound = bound_names(&toks, expr);
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i < toks.len() {
        if is_attribute_open(&toks, expr, i) {
            i = skip_group(&toks, i);
            continue;
        }
        let t = &toks[i];
        if t.kind == TokenKind::Ident {
            let name = t.text(expr);
            let after_dot = i > 0 && toks[i - 1].text(expr) == ".";
            let after_cast = i > 0 && matches!(toks[i - 1].text(expr), "as" | "is");
            if !after_dot
                && !after_cast
                && !RESERVED.contains(&name)
                && !bound.contains(name)
                && !known.contains(name)
            {
                out.insert(name.to_string());
            }
        }
        i += 1;
    }
    out.into_iter().collect()
}

/// Names declared in a type-parameter list such as `<T(==), U>`.
pub fn type_param_names(type_params: &str) -> Vec<String> {
    let (toks, _) = tokenize(type_params);
    let mut out = Vec::new();
    let mut depth = 0i32;
    for (i, t) in toks.iter().enumerate() {
        match t.text(type_params) {
            "<" => depth += 1,
            ">" => depth -= 1,
            _ if t.is_open() => depth += 1,
            _ if t.is_close() => depth -= 1,
            name if depth == 1 && t.kind == TokenKind::Ident => {
                let prev = i.checked_sub(1).map(|p| toks[p].text(type_params));
                if matches!(prev, Some("<") | Some(",")) {
                    out.push(name.to_string());
                }
            }
            _ => {}
        }
    }
    out
}

use std::collections::BTreeSet;

use super::lexer::{tokenize, LexIssue, Token, TokenKind};
use super::{ClauseKind, MethodUnit, Param, SpecClause, StructuralIssue, UnitKind};

pub(super) struct Parsed {
    pub units: Vec<MethodUnit>,
    pub declared: BTreeSet<String>,
    pub issues: Vec<StructuralIssue>,
}

const MODIFIERS: &[&str] = &["ghost", "static", "twostate", "least", "greatest", "abstract", "opaque"];

const UNIT_KEYWORDS: &[&str] = &["method", "function", "predicate", "lemma", "constructor"];

const CONTAINER_KEYWORDS: &[&str] = &["class", "trait", "module", "iterator"];

/// Words that can only start a new member declaration.
const DECL_KEYWORDS: &[&str] = &[
    "method", "function", "predicate", "lemma", "constructor", "class", "trait", "module", "datatype",
    "codatatype", "const", "ghost", "static", "type", "newtype", "import", "iterator", "twostate",
    "least", "greatest", "opaque", "abstract", "include",
];

const METHOD_CLAUSES: &[&str] = &["requires", "ensures", "modifies", "reads", "decreases"];
const LOOP_CLAUSES: &[&str] = &["invariant", "decreases", "modifies"];

/// Identifiers that act as operators: an expression cannot end on them.
const OPERATOR_WORDS: &[&str] = &[
    "in", "then", "else", "if", "forall", "exists", "match", "case", "returns", "requires", "ensures",
    "invariant", "decreases", "modifies", "reads", "var", "set", "iset", "map", "imap", "seq",
    "multiset", "new", "assert", "assume", "calc", "by", "yield",
];

pub(super) fn parse_units(src: &str) -> Parsed {
    let (toks, lex_issues) = tokenize(src);
    let mut issues: Vec<StructuralIssue> = lex_issues
        .into_iter()
        .map(|i| match i {
            LexIssue::UnterminatedComment { start } => StructuralIssue::UnterminatedComment { offset: start },
            LexIssue::UnterminatedString { start } => StructuralIssue::UnterminatedString { offset: start },
        })
        .collect();
    let partner = match_delimiters(&toks, &mut issues);
    let mut parser = Parser {
        src,
        toks: &toks,
        partner,
        units: Vec::new(),
        declared: BTreeSet::new(),
        issues,
    };
    parser.scope_members(0, toks.len(), &[]);
    parser.units.sort_by_key(|u| u.span.start);
    Parsed {
        units: parser.units,
        declared: parser.declared,
        issues: parser.issues,
    }
}

/// Pairs each opener with its closer. A closer that does not match the top
/// of the stack closes the nearest matching opener; openers skipped that way
/// stay unpaired, and closers with no opener at all are ignored.
fn match_delimiters(toks: &[Token], issues: &mut Vec<StructuralIssue>) -> Vec<Option<usize>> {
    let mut partner = vec![None; toks.len()];
    let mut stack: Vec<usize> = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if t.is_open() {
            stack.push(i);
        } else if t.is_close() {
            let want = match t.kind {
                TokenKind::RParen => TokenKind::LParen,
                TokenKind::RBracket => TokenKind::LBracket,
                _ => TokenKind::LBrace,
            };
            match stack.iter().rposition(|&o| toks[o].kind == want) {
                Some(pos) => {
                    for &orphan in &stack[pos + 1..] {
                        issues.push(StructuralIssue::UnmatchedOpen { offset: toks[orphan].span.start });
                    }
                    let open = stack[pos];
                    stack.truncate(pos);
                    partner[open] = Some(i);
                    partner[i] = Some(open);
                }
                None => issues.push(StructuralIssue::UnmatchedClose { offset: t.span.start }),
            }
        }
    }
    for orphan in stack {
        issues.push(StructuralIssue::UnmatchedOpen { offset: toks[orphan].span.start });
    }
    partner
}

struct Parser<'a> {
    src: &'a str,
    toks: &'a [Token],
    partner: Vec<Option<usize>>,
    units: Vec<MethodUnit>,
    declared: BTreeSet<String>,
    issues: Vec<StructuralIssue>,
}

impl<'a> Parser<'a> {
    fn text(&self, i: usize) -> &'a str {
        self.toks.get(i).map(|t| t.text(self.src)).unwrap_or("")
    }

    fn kind(&self, i: usize) -> Option<TokenKind> {
        self.toks.get(i).map(|t| t.kind)
    }

    fn is_ident(&self, i: usize, word: &str) -> bool {
        self.kind(i) == Some(TokenKind::Ident) && self.text(i) == word
    }

    fn is_attribute(&self, i: usize) -> bool {
        self.kind(i) == Some(TokenKind::LBrace) && self.text(i + 1) == ":"
    }

    /// Index just past the closer of the opener at `i`, or `limit` when unpaired.
    fn skip_group(&self, i: usize, limit: usize) -> usize {
        match self.partner[i] {
            Some(close) if close > i => (close + 1).min(limit),
            _ => limit,
        }
    }

    fn skip_attributes(&self, mut i: usize, limit: usize) -> usize {
        while i < limit && self.is_attribute(i) {
            i = self.skip_group(i, limit);
        }
        i
    }

    fn scope_members(&mut self, start: usize, end: usize, scope: &[String]) {
        let mut i = start;
        let mut decl_start: Option<usize> = None;
        while i < end {
            let tok = &self.toks[i];
            if tok.is_open() {
                i = self.skip_group(i, end);
                decl_start = None;
                continue;
            }
            if tok.kind != TokenKind::Ident {
                i += 1;
                decl_start = None;
                continue;
            }
            let word = self.text(i);
            if UNIT_KEYWORDS.contains(&word) {
                let first = decl_start.unwrap_or(i);
                i = match self.unit(first, i, end, scope) {
                    Some(next) => next,
                    None => i + 1,
                };
                decl_start = None;
            } else if MODIFIERS.contains(&word) {
                decl_start.get_or_insert(i);
                i += 1;
            } else if CONTAINER_KEYWORDS.contains(&word) {
                i = self.container(i, end, scope);
                decl_start = None;
            } else if word == "datatype" || word == "codatatype" {
                i = self.datatype(i, end, scope);
                decl_start = None;
            } else if matches!(word, "const" | "var" | "type" | "newtype") {
                let j = self.skip_attributes(i + 1, end);
                if self.kind(j) == Some(TokenKind::Ident) {
                    self.declared.insert(self.text(j).to_string());
                }
                i = j.max(i + 1);
                decl_start = None;
            } else if word == "import" {
                let mut j = i + 1;
                while j < end && self.is_ident(j, "opened") {
                    j += 1;
                }
                if self.kind(j) == Some(TokenKind::Ident) {
                    self.declared.insert(self.text(j).to_string());
                }
                i = j.max(i + 1);
                decl_start = None;
            } else {
                i += 1;
                decl_start = None;
            }
        }
    }

    fn container(&mut self, kw: usize, end: usize, scope: &[String]) -> usize {
        let mut j = self.skip_attributes(kw + 1, end);
        let mut name = String::new();
        while j < end && self.kind(j) == Some(TokenKind::Ident) && name.is_empty() {
            name = self.text(j).to_string();
            j += 1;
            // `module A.B`
            while self.text(j) == "." && self.kind(j + 1) == Some(TokenKind::Ident) {
                name.push('.');
                name.push_str(self.text(j + 1));
                j += 2;
            }
        }
        if !name.is_empty() {
            self.declared.insert(name.split('.').next_back().unwrap_or(&name).to_string());
        }
        while j < end {
            match self.kind(j) {
                Some(TokenKind::LBrace) if !self.is_attribute(j) => {
                    let close = self.skip_group(j, end);
                    let body_end = if self.partner[j].is_some() { close - 1 } else { end };
                    let mut inner = scope.to_vec();
                    inner.push(name);
                    self.scope_members(j + 1, body_end, &inner);
                    return close;
                }
                Some(k) if matches!(k, TokenKind::LBrace | TokenKind::LParen | TokenKind::LBracket) => {
                    j = self.skip_group(j, end);
                }
                Some(TokenKind::RBrace) => return j,
                Some(TokenKind::Ident) if DECL_KEYWORDS.contains(&self.text(j)) => return j,
                _ => j += 1,
            }
        }
        j
    }

    fn datatype(&mut self, kw: usize, end: usize, scope: &[String]) -> usize {
        let mut j = self.skip_attributes(kw + 1, end);
        let name = if self.kind(j) == Some(TokenKind::Ident) {
            let n = self.text(j).to_string();
            self.declared.insert(n.clone());
            j += 1;
            n
        } else {
            String::new()
        };
        let mut expect_ctor = false;
        while j < end {
            match self.kind(j) {
                Some(TokenKind::LBrace) if !self.is_attribute(j) => {
                    let close = self.skip_group(j, end);
                    let body_end = if self.partner[j].is_some() { close - 1 } else { end };
                    let mut inner = scope.to_vec();
                    inner.push(name);
                    self.scope_members(j + 1, body_end, &inner);
                    return close;
                }
                Some(TokenKind::LBrace | TokenKind::LParen | TokenKind::LBracket) => {
                    j = self.skip_group(j, end);
                    expect_ctor = false;
                }
                Some(TokenKind::RBrace) => return j,
                Some(TokenKind::Punct) => {
                    let p = self.text(j);
                    expect_ctor = p == "=" || p == "|";
                    j += 1;
                }
                Some(TokenKind::Ident) => {
                    let w = self.text(j);
                    if DECL_KEYWORDS.contains(&w) && w != "ghost" {
                        return j;
                    }
                    if expect_ctor && w != "ghost" {
                        self.declared.insert(w.to_string());
                        expect_ctor = false;
                    }
                    j += 1;
                }
                _ => j += 1,
            }
        }
        j
    }

    /// Parses one unit whose declaration starts at token `first` (a modifier
    /// or the keyword) with the keyword at `kw`. Returns the index after it.
    fn unit(&mut self, first: usize, kw: usize, end: usize, scope: &[String]) -> Option<usize> {
        let keyword = self.text(kw);
        let kind = match keyword {
            "method" => UnitKind::Method,
            "lemma" => UnitKind::Lemma,
            "constructor" => UnitKind::Constructor,
            _ => UnitKind::Function,
        };
        let is_static = (first..kw).any(|m| self.is_ident(m, "static"));
        let mut j = kw + 1;
        if matches!(keyword, "function" | "predicate") && self.is_ident(j, "method") {
            j += 1;
        }
        j = self.skip_attributes(j, end);
        let name = if self.kind(j) == Some(TokenKind::Ident) && !self.is_ident(j, "returns") {
            j += 1;
            self.text(j - 1).to_string()
        } else if kind == UnitKind::Constructor {
            "constructor".to_string()
        } else {
            return None;
        };
        let mut type_params = None;
        if self.text(j) == "<" {
            let open = j;
            let mut depth = 0i32;
            while j < end {
                match self.text(j) {
                    "<" => depth += 1,
                    ">" => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                if self.toks[j].is_open() && self.text(j) != "<" {
                    j = self.skip_group(j, end);
                    continue;
                }
                j += 1;
            }
            if j >= end {
                return None;
            }
            type_params = Some(self.src[self.toks[open].span.start..self.toks[j].span.end].to_string());
            j += 1;
        }
        if self.kind(j) != Some(TokenKind::LParen) {
            return None;
        }
        let params_close = self.partner[j]?;
        if params_close >= end {
            return None;
        }
        let params = self.params(j, params_close);
        let mut sig_end = params_close;
        j = params_close + 1;
        let mut returns = Vec::new();
        let mut result_type = None;
        if self.is_ident(j, "returns") && self.kind(j + 1) == Some(TokenKind::LParen) {
            let close = self.partner[j + 1]?;
            returns = self.params(j + 1, close);
            sig_end = close;
            j = close + 1;
        } else if kind == UnitKind::Function && self.text(j) == ":" {
            j += 1;
            let named = self.kind(j) == Some(TokenKind::LParen)
                && self.partner[j].is_some_and(|c| (j + 1..c).any(|k| self.text(k) == ":"));
            if named {
                let close = self.partner[j]?;
                returns = self.params(j, close);
                sig_end = close;
                j = close + 1;
            } else {
                let start = j;
                while j < end && !self.ends_type(j) {
                    j = if self.toks[j].is_open() { self.skip_group(j, end) } else { j + 1 };
                }
                if j > start {
                    sig_end = j - 1;
                    result_type = Some(
                        self.src[self.toks[start].span.start..self.toks[j - 1].span.end].to_string(),
                    );
                }
            }
        }
        let signature_span = self.toks[first].span.start..self.toks[sig_end].span.end;
        let mut clauses = Vec::new();
        let mut unit_end = signature_span.end;
        while j < end && self.kind(j) == Some(TokenKind::Ident) && METHOD_CLAUSES.contains(&self.text(j)) {
            let (clause, next) = self.clause(j, end, None);
            if let Some(c) = clause {
                unit_end = c.span.end;
                clauses.push(c);
            }
            j = next;
        }
        let mut body_span = None;
        if self.kind(j) == Some(TokenKind::LBrace) && !self.is_attribute(j) {
            let close = self.partner[j];
            let body_end_tok = match close {
                Some(c) if c < end => c,
                _ => end - 1,
            };
            body_span = Some(self.toks[j].span.start..self.toks[body_end_tok].span.end);
            unit_end = self.toks[body_end_tok].span.end;
            clauses.extend(self.loop_clauses(j + 1, body_end_tok));
            j = body_end_tok + 1;
            // `function f(): T { .. } by method { .. }`
            if self.is_ident(j, "by") && self.is_ident(j + 1, "method") && self.kind(j + 2) == Some(TokenKind::LBrace) {
                let close = self.skip_group(j + 2, end);
                unit_end = self.toks[close - 1].span.end;
                clauses.extend(self.loop_clauses(j + 3, close - 1));
                j = close;
            }
        }
        let mut qualified = scope.join(".");
        if !qualified.is_empty() {
            qualified.push('.');
        }
        qualified.push_str(&name);
        self.declared.insert(name.clone());
        self.units.push(MethodUnit {
            name,
            qualified_name: qualified,
            kind,
            span: signature_span.start..unit_end,
            signature_span,
            type_params,
            params,
            returns,
            result_type,
            is_static,
            scope: scope.to_vec(),
            spec_clauses: clauses,
            body_span,
        });
        Some(j)
    }

    fn ends_type(&self, j: usize) -> bool {
        match self.kind(j) {
            Some(TokenKind::LBrace) => !self.is_attribute(j),
            Some(TokenKind::RBrace) => true,
            Some(TokenKind::Ident) => {
                let w = self.text(j);
                METHOD_CLAUSES.contains(&w) || DECL_KEYWORDS.contains(&w) || w == "var"
            }
            _ => false,
        }
    }

    fn params(&self, open: usize, close: usize) -> Vec<Param> {
        let mut out = Vec::new();
        let mut piece_start = open + 1;
        let mut k = open + 1;
        let mut angle = 0i32;
        while k <= close {
            if k < close && self.toks[k].is_open() {
                k = self.skip_group(k, close);
                continue;
            }
            match self.text(k) {
                "<" => angle += 1,
                ">" => angle -= 1,
                _ => {}
            }
            if k == close || (self.text(k) == "," && angle <= 0) {
                if let Some(p) = self.param(piece_start, k) {
                    out.push(p);
                }
                piece_start = k + 1;
            }
            k += 1;
        }
        out
    }

    fn param(&self, start: usize, end: usize) -> Option<Param> {
        let mut s = start;
        while s < end && matches!(self.text(s), "ghost" | "nameonly" | "older" | "new" | "linear" | "shared") {
            s += 1;
        }
        if s >= end || self.kind(s) != Some(TokenKind::Ident) {
            return None;
        }
        let name = self.text(s).to_string();
        if self.text(s + 1) != ":" || s + 2 >= end {
            return None;
        }
        let ty_start = s + 2;
        let mut ty_end = end;
        let mut k = ty_start;
        while k < end {
            if self.text(k) == ":=" {
                ty_end = k;
                break;
            }
            k = if self.toks[k].is_open() { self.skip_group(k, end) } else { k + 1 };
        }
        if ty_end <= ty_start {
            return None;
        }
        let ty = self.src[self.toks[ty_start].span.start..self.toks[ty_end - 1].span.end].to_string();
        Some(Param { name, ty })
    }

    /// Whether the expression scanned so far ends on an operand, so that a
    /// following `{` opens a body rather than a set display.
    fn ends_operand(&self, prev: usize, expr_start: usize) -> bool {
        if prev < expr_start {
            return false;
        }
        match self.kind(prev) {
            Some(TokenKind::Ident) => !OPERATOR_WORDS.contains(&self.text(prev)),
            Some(TokenKind::Number | TokenKind::Str | TokenKind::Char) => true,
            Some(TokenKind::RParen | TokenKind::RBracket | TokenKind::RBrace) => true,
            Some(TokenKind::Punct) => match self.text(prev) {
                "|" => true,
                // `decreases *`, `reads *`, `modifies *`
                "*" => prev == expr_start,
                _ => false,
            },
            _ => false,
        }
    }

    /// Scans the clause whose keyword is at `kw`. Returns the clause (absent
    /// when the expression is empty) and the index of the first token after it.
    fn clause(&mut self, kw: usize, end: usize, attached_loop: Option<usize>) -> (Option<SpecClause>, usize) {
        let kind = ClauseKind::from_keyword(self.text(kw)).expect("caller checks clause keyword");
        let in_body = attached_loop.is_some();
        let expr_start = kw + 1;
        let mut k = expr_start;
        let mut last: Option<usize> = None;
        while k < end {
            let t = &self.toks[k];
            match t.kind {
                TokenKind::LBrace if self.is_attribute(k) => {}
                TokenKind::LBrace => {
                    if last.is_some_and(|l| self.ends_operand(l, expr_start)) {
                        break;
                    }
                }
                TokenKind::LParen | TokenKind::LBracket => {}
                TokenKind::RParen | TokenKind::RBracket | TokenKind::RBrace => break,
                TokenKind::Ident => {
                    let w = self.text(k);
                    let clause_word = if in_body { LOOP_CLAUSES.contains(&w) } else { METHOD_CLAUSES.contains(&w) };
                    if clause_word || (DECL_KEYWORDS.contains(&w) && w != "new") {
                        break;
                    }
                    if w == "var" && last.is_some_and(|l| self.ends_operand(l, expr_start)) {
                        break;
                    }
                    if in_body && matches!(w, "invariant" | "decreases" | "modifies" | "while" | "for") {
                        break;
                    }
                }
                TokenKind::Punct if in_body && t.text(self.src) == ";" => break,
                _ => {}
            }
            if t.is_open() {
                match self.partner[k] {
                    Some(close) if close > k && close < end => {
                        last = Some(close);
                        k = close + 1;
                        continue;
                    }
                    _ => break,
                }
            }
            last = Some(k);
            k += 1;
        }
        match last {
            Some(l) => {
                let span = self.toks[kw].span.start..self.toks[l].span.end;
                let expr = self.src[self.toks[expr_start].span.start..self.toks[l].span.end].trim().to_string();
                (
                    Some(SpecClause {
                        kind,
                        expr_text: expr,
                        span,
                        attached_loop,
                    }),
                    k,
                )
            }
            None => {
                self.issues.push(StructuralIssue::EmptyClause { offset: self.toks[kw].span.start });
                (None, k.max(kw + 1))
            }
        }
    }

    fn loop_clauses(&mut self, start: usize, end: usize) -> Vec<SpecClause> {
        let mut out = Vec::new();
        let mut loops = 0usize;
        let mut current: Option<usize> = None;
        let mut k = start;
        while k < end {
            if self.kind(k) == Some(TokenKind::Ident) {
                let w = self.text(k);
                if w == "while" || w == "for" {
                    current = Some(loops);
                    loops += 1;
                } else if LOOP_CLAUSES.contains(&w) && current.is_some() {
                    let (clause, next) = self.clause(k, end, current);
                    out.extend(clause);
                    k = next;
                    continue;
                }
            }
            k += 1;
        }
        out
    }
}


//! In-process twin of `fixtures/stub_dafny.py`.
#![allow(dead_code)]

use std::path::PathBuf;

use specgate::verifier::{Diagnostic, FnBackend, Gateway, Severity, Verdict, VerificationOutcome, VerifierConfig};

pub fn stub_script() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stub_dafny.py")
}

fn balanced(s: &str) -> bool {
    let mut d = 0i32;
    for c in s.chars() {
        match c {
            '(' | '[' | '{' => d += 1,
            ')' | ']' | '}' => d -= 1,
            _ => {}
        }
        if d < 0 {
            return false;
        }
    }
    d == 0
}

pub fn conjuncts(expr: &str) -> Vec<String> {
    let mut e = expr.split_whitespace().collect::<Vec<_>>().join(" ");
    while e.starts_with('(') && e.ends_with(')') && balanced(&e[1..e.len() - 1]) {
        e = e[1..e.len() - 1].trim().to_string();
    }
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    let b = e.as_bytes();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b'&' if depth == 0 && b.get(i + 1) == Some(&b'&') => {
                parts.push(e[start..i].to_string());
                i += 2;
                start = i;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    parts.push(e[start..].to_string());
    if parts.len() == 1 {
        return if e.is_empty() { vec![] } else { vec![e] };
    }
    parts.iter().flat_map(|p| conjuncts(p)).collect()
}

fn located(text: &str, word: &str) -> Option<(u32, u32)> {
    let re = regex::Regex::new(&format!(r"\b{word}\b")).unwrap();
    let m = re.find(text)?;
    let line = text[..m.start()].matches('\n').count() as u32 + 1;
    let col = (m.start() - text[..m.start()].rfind('\n').map_or(0, |p| p + 1)) as u32 + 1;
    Some((line, col))
}

fn error(line: u32, column: u32, message: &str) -> Diagnostic {
    Diagnostic {
        line,
        column,
        severity: Severity::Error,
        message: message.to_string(),
    }
}

pub fn toy_verify(text: &str) -> VerificationOutcome {
    let done = |verdict, diagnostics| VerificationOutcome {
        verdict,
        diagnostics,
        wall_time: 0.0,
        from_cache: false,
    };
    for (word, verdict) in [("SYNTAX_ERROR", Verdict::SyntaxError), ("TYPE_ERROR", Verdict::TypeError)] {
        if let Some((l, c)) = located(text, word) {
            return done(verdict, vec![error(l, c, &format!("unexpected {word}"))]);
        }
    }
    let mut errors = Vec::new();
    if let Some((l, c)) = located(text, "VERIFY_FAIL") {
        errors.push(error(l, c, "assertion might not hold"));
    }
    let lines: Vec<&str> = text.split('\n').collect();
    let header = regex::Regex::new(r"^\s*(static\s+)?lemma\s").unwrap();
    for (idx, line) in lines.iter().enumerate() {
        if !header.is_match(line) {
            continue;
        }
        let mut clauses: Vec<(String, String)> = Vec::new();
        for l in lines[idx + 1..].iter().map(|l| l.trim()).take_while(|l| !l.starts_with('{')) {
            let (w, rest) = l.split_once(' ').unwrap_or((l, ""));
            if w == "requires" || w == "ensures" {
                clauses.push((w.to_string(), rest.to_string()));
            } else if let Some(last) = clauses.last_mut() {
                last.1.push(' ');
                last.1.push_str(l);
            }
        }
        let reqs: Vec<String> = clauses.iter().filter(|c| c.0 == "requires").flat_map(|c| conjuncts(&c.1)).collect();
        let proved = clauses
            .iter()
            .filter(|c| c.0 == "ensures")
            .flat_map(|c| conjuncts(&c.1))
            .all(|c| c == "true" || reqs.contains(&c));
        if !proved {
            errors.push(error(idx as u32 + 1, 1, "a postcondition could not be proved on this return path"));
        }
    }
    if errors.is_empty() {
        done(Verdict::Verified, vec![])
    } else {
        done(Verdict::VerificationFailed, errors)
    }
}

pub fn toy_gateway() -> Gateway {
    let backend = FnBackend::new("stub-dafny 1.0.0", toy_verify);
    Gateway::with_backend(Box::new(backend), &VerifierConfig::default()).unwrap()
}

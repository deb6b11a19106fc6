use proptest::prelude::*;

use specgate::source::{splice, strip_specs, ClauseKind, SourceFile, SpecClause};

const SOUP: &[&str] = &[
    "method M(x: int) returns (y: int)",
    "function F(a: nat): nat",
    "lemma L()",
    "class C",
    "{",
    "}",
    "(",
    ")",
    "[",
    "]",
    "\"",
    "\"}\"",
    "'}'",
    "@\"{\"",
    "/*",
    "*/",
    "// }",
    "\n",
    " ",
    "requires x > 0",
    "ensures y == x",
    "invariant 0 <= i",
    "decreases n - i",
    "modifies a",
    "reads this",
    "while i < n",
    "for k := 0 to n",
    "var i := 0;",
    "|",
    "::",
    "==>",
    "σ",
    "{:attr}",
    "x'",
];

fn soup() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(SOUP), 0..60).prop_map(|parts| parts.concat())
}

const PRE: &[&str] = &["x >= 0", "x < 100", "0 <= x <= 10", "x != 3"];
const POST: &[&str] = &["y == x + 1", "y > x", "y >= 0 || x < 0", "(y - x) * 2 == 2"];

fn method(name: String) -> impl Strategy<Value = String> {
    (
        prop::collection::vec(prop::sample::select(PRE), 0..3),
        prop::collection::vec(prop::sample::select(POST), 0..3),
        0usize..3,
    )
        .prop_map(move |(pre, post, loops)| {
            let mut s = format!("method {name}(x: int) returns (y: int)\n");
            for p in pre {
                s.push_str(&format!("  requires {p}\n"));
            }
            for p in post {
                s.push_str(&format!("  ensures {p}\n"));
            }
            s.push_str("{\n  y := x + 1;\n");
            for l in 0..loops {
                s.push_str(&format!(
                    "  var i{l} := 0;\n  while i{l} < 3\n    invariant 0 <= i{l} <= 3\n    decreases 3 - i{l}\n  {{\n    i{l} := i{l} + 1;\n  }}\n"
                ));
            }
            s.push_str("}\n");
            s
        })
}

fn program() -> impl Strategy<Value = (String, usize)> {
    (1usize..5, any::<bool>()).prop_flat_map(|(n, in_class)| {
        let methods: Vec<_> = (0..n).map(|i| method(format!("M{i}"))).collect();
        methods.prop_map(move |ms| {
            let body = ms.join("\n");
            let text = if in_class {
                format!("class K {{\n{body}}}\n")
            } else {
                body
            };
            (text, n)
        })
    })
}

proptest! {
    #[test]
    fn soup_never_panics_and_spans_are_disjoint(text in soup()) {
        let file = SourceFile::parse(&text);
        prop_assert_eq!(file.serialize(), text.clone());
        let mut spans: Vec<_> = file.units.iter().map(|u| u.span.clone()).collect();
        spans.sort_by_key(|s| s.start);
        for w in spans.windows(2) {
            prop_assert!(w[0].end <= w[1].start, "{:?} overlaps {:?}", w[0], w[1]);
        }
        for u in &file.units {
            prop_assert!(u.span.end <= text.len());
            for c in &u.spec_clauses {
                prop_assert!(u.span.start <= c.span.start && c.span.end <= u.span.end);
                prop_assert!(!c.expr_text.trim().is_empty());
            }
        }
        let _ = strip_specs(&file);
    }

    #[test]
    fn strip_is_idempotent((text, n) in program()) {
        let file = SourceFile::parse(&text);
        prop_assert_eq!(file.units.len(), n);
        let once = strip_specs(&file);
        let again = strip_specs(&SourceFile::parse(&once));
        prop_assert_eq!(again, once);
    }

    #[test]
    fn splice_adds_exactly_k_clauses(
        (text, n) in program(),
        pick in any::<prop::sample::Index>(),
        added in prop::collection::vec((any::<bool>(), prop::sample::select(POST)), 0..4),
    ) {
        let file = SourceFile::parse(&text);
        let unit = &file.units[pick.index(n)];
        let before = unit.spec_clauses.len();
        let clauses: Vec<_> = added
            .iter()
            .map(|(req, e)| {
                let kind = if *req { ClauseKind::Requires } else { ClauseKind::Ensures };
                SpecClause::detached(kind, *e)
            })
            .collect();
        let out = splice(&file, &unit.qualified_name, &clauses).unwrap();
        let reparsed = SourceFile::parse(&out);
        let after = reparsed.unit(&unit.qualified_name).unwrap().spec_clauses.len();
        prop_assert_eq!(after, before + clauses.len());
        for other in file.units.iter().filter(|u| u.qualified_name != unit.qualified_name) {
            let r = reparsed.unit(&other.qualified_name).unwrap();
            prop_assert_eq!(r.spec_clauses.len(), other.spec_clauses.len());
        }
    }
}

use proptest::prelude::*;
use specgate::pipeline::{
    sft_prompt, IterationKind, Pipeline, PipelineError, PromptTemplates, ScriptedClient, Status,
};
use specgate::source::{extract_clause_sets, SourceFile};
use specgate::verifier::{FnBackend, Gateway, Verdict, VerificationOutcome, VerifierConfig};

const SUM: &str = "method Sum(n: int) returns (s: int)
  requires n >= -1
  ensures s == n * (n + 1) / 2
{
    var i := 0;
    s := 0;
    while i <= n
      invariant s == i * (i - 1) / 2
      invariant 0 <= i <= n + 1
    {
        s := s + i;
        i := i + 1;
    }
}
";

/// Accepts well-formed programs that do not contain the word BROKEN.
fn stub_gateway() -> Gateway {
    let backend = FnBackend::new("stub-1", |t| {
        let ok = SourceFile::parse(t).is_well_formed() && !t.contains("BROKEN");
        VerificationOutcome {
            verdict: if ok { Verdict::Verified } else { Verdict::VerificationFailed },
            diagnostics: vec![],
            wall_time: 0.0,
            from_cache: false,
        }
    });
    Gateway::with_backend(Box::new(backend), &VerifierConfig::default()).unwrap()
}

fn fenced(code: &str) -> String {
    format!("Translation:\n```dafny\n{code}```\nDone.")
}

#[test]
fn never_verifying_client_hits_the_cap() {
    let gw = stub_gateway();
    let client = ScriptedClient::new((0..20).map(|i| fenced(&format!("method M{i}() {{ BROKEN }}\n"))));
    let rec = Pipeline::new(&client, &gw).translate_and_repair("p", "def f(): pass").unwrap();
    assert_eq!(rec.status, Status::FailedMaxIter);
    assert_eq!(client.calls(), 11);
    assert_eq!(rec.iterations.len(), 11);
    assert_eq!(rec.repair_rounds(), 10);
    assert_eq!(rec.iterations[0].kind, IterationKind::Translate);
}

#[test]
fn sum_on_round_three_verifies() {
    let gw = stub_gateway();
    let client = ScriptedClient::new([
        fenced("method Sum(n: int) returns (s: int) { BROKEN }\n"),
        fenced("method Sum(n: int) returns (s: int) { s := BROKEN; }\n"),
        fenced(SUM),
        fenced("never requested\n"),
    ]);
    let rec = Pipeline::new(&client, &gw).translate_and_repair("sum", "def sum(n): ...").unwrap();
    assert_eq!(rec.status, Status::Verified);
    assert_eq!(rec.iterations.len(), 3);
    assert_eq!(rec.dafny_text, SUM);
    assert_eq!(rec.iterations.last().unwrap().outcome.verdict, Verdict::Verified);
}

#[test]
fn transcript_covers_every_call() {
    let gw = stub_gateway();
    let client = ScriptedClient::new(["```dafny\nBROKEN\n```", "```dafny\nBROKEN 2\n```", "```dafny\nmethod M() {}\n```"]);
    let rec = Pipeline::new(&client, &gw).translate_and_repair("t", "x = 1").unwrap();
    let prompts = client.prompts();
    assert_eq!(rec.iterations.len(), prompts.len());
    assert_eq!(rec.transcript.len(), prompts.len());
    for ((it, ex), p) in rec.iterations.iter().zip(&rec.transcript).zip(&prompts) {
        assert_eq!((&ex.system, &ex.user), (&p.system, &p.user));
        assert_eq!(it.response_digest, specgate::pipeline::digest(&ex.response));
    }
    assert!(prompts[2].user.contains("BROKEN 2"));
}

#[test]
fn identical_inputs_give_identical_records() {
    let run = || {
        let gw = stub_gateway();
        let client = ScriptedClient::new(["```dafny\nBROKEN\n```", "```dafny\nmethod M() {}\n```"]);
        Pipeline::new(&client, &gw).translate_and_repair("d", "pass").unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn unreachable_client_keeps_partial_transcript() {
    let gw = stub_gateway();
    let client = ScriptedClient::new(["```dafny\nBROKEN\n```"]);
    match Pipeline::new(&client, &gw).translate_and_repair("u", "pass") {
        Err(PipelineError::ClientUnavailable { partial, .. }) => assert_eq!(partial.iterations.len(), 1),
        Ok(r) => panic!("unexpected success: {r:?}"),
    }
}

const TWO: &str = "method Double(x: int) returns (y: int)
{
  y := x + x;
}

method Quad(x: int) returns (z: int)
{
  var d := Double(x);
  z := Double(d);
}
";

const TWO_MAIN: &str = "method Double(x: int) returns (y: int)
{
  y := x + x;
}

method Quad(x: int) returns (z: int)
  ensures z == 4 * x
{
  var d := Double(x);
  z := Double(d);
}
";

const TWO_BOTH: &str = "method Double(x: int) returns (y: int)
  ensures y == 2 * x
{
  y := x + x;
}

method Quad(x: int) returns (z: int)
  ensures z == 4 * x
{
  var d := Double(x);
  z := Double(d);
}
";

#[test]
fn main_is_annotated_before_sub_function() {
    let gw = stub_gateway();
    let client = ScriptedClient::new([fenced(TWO_MAIN), fenced(TWO_BOTH)]);
    let file = SourceFile::parse(TWO);
    let rec = Pipeline::new(&client, &gw).staged_spec_insertion("two", &file, None).unwrap();
    assert_eq!(rec.status, Status::Verified);
    assert_eq!(rec.completed_stages, vec!["main:Quad", "sub:Double"]);
    let prompts = client.prompts();
    assert!(prompts[0].user.contains("`Quad`"));
    assert!(prompts[1].user.contains("`Double`"));
    assert!(prompts[1].user.contains("ensures z == 4 * x"));
    assert!(rec.iterations.iter().all(|i| i.outcome.verdict == Verdict::Verified));
    assert_eq!(rec.dafny_text, TWO_BOTH);
}

#[test]
fn single_method_is_one_round() {
    let gw = stub_gateway();
    let client = ScriptedClient::new([fenced(SUM)]);
    let bare = specgate::source::strip_specs(&SourceFile::parse(SUM));
    let rec = Pipeline::new(&client, &gw)
        .staged_spec_insertion("sum", &SourceFile::parse(&bare), None)
        .unwrap();
    assert_eq!((rec.status, rec.iterations.len()), (Status::Verified, 1));
}

#[test]
fn failing_sub_function_keeps_main_result() {
    let gw = stub_gateway();
    let responses = std::iter::once(fenced(TWO_MAIN)).chain((0..11).map(|_| fenced("method Double() { BROKEN }\n")));
    let client = ScriptedClient::new(responses);
    let rec = Pipeline::new(&client, &gw)
        .staged_spec_insertion("two", &SourceFile::parse(TWO), None)
        .unwrap();
    assert_eq!(rec.status, Status::FailedMaxIter);
    assert_eq!(rec.completed_stages, vec!["main:Quad"]);
    assert_eq!(rec.dafny_text, TWO_MAIN);
    assert_eq!(client.calls(), 12);
    assert_eq!(rec.repair_rounds(), 10);
}

#[test]
fn dropping_the_target_unit_is_not_accepted() {
    let gw = stub_gateway();
    let only_double = "method Double(x: int) returns (y: int)\n{\n  y := x + x;\n}\n";
    let client = ScriptedClient::new([fenced(only_double), fenced(TWO_MAIN), fenced(TWO_BOTH)]);
    let rec = Pipeline::new(&client, &gw)
        .staged_spec_insertion("two", &SourceFile::parse(TWO), None)
        .unwrap();
    assert_eq!(rec.status, Status::Verified);
    assert!(client.prompts()[1].user.contains("`Quad` is missing"));
}

#[test]
fn unverified_input_is_unsupported() {
    let gw = stub_gateway();
    let client = ScriptedClient::new(Vec::<String>::new());
    let file = SourceFile::parse("method M() { BROKEN }\n");
    let rec = Pipeline::new(&client, &gw).staged_spec_insertion("m", &file, None).unwrap();
    assert_eq!((rec.status, client.calls()), (Status::FailedUnsupported, 0));
}

proptest! {
    #[test]
    fn sft_prompts_never_leak_clauses(
        names in prop::collection::btree_set("[A-Z][a-z]{2,6}", 1..4),
        bounds in prop::collection::vec(0u32..1000, 4),
    ) {
        let mut code = String::new();
        for (i, name) in names.iter().enumerate() {
            code.push_str(&format!(
                "method {name}(x: int) returns (r: int)\n  requires x > {}\n  ensures r >= spec_marker_{i}\n{{\n  r := x;\n}}\n\n",
                bounds[i],
            ));
        }
        let file = SourceFile::parse(&code);
        let prompt = sft_prompt(&PromptTemplates::default(), &code);
        for unit in &file.units {
            let set = extract_clause_sets(unit);
            for clause in set.pre.iter().chain(&set.post) {
                prop_assert!(!prompt.user.contains(clause.as_str()), "leaked {clause}");
            }
            prop_assert!(prompt.user.contains(unit.signature(&code)));
        }
        prop_assert!(!prompt.user.contains("requires") && !prompt.user.contains("ensures"));
    }
}

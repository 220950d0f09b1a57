use quakesim::llm::{parse_response, serialize_response, ParseError};
use quakesim::MmiLevel;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    name: String,
    raw: String,
    expect: String,
}

fn outcome(raw: &str) -> String {
    match parse_response(raw) {
        Ok((l, _)) => format!("level:{}", l.value()),
        Err(ParseError::NoJson) => "no_json".into(),
        Err(ParseError::Schema(_)) => "schema".into(),
        Err(ParseError::Value(_)) => "value".into(),
    }
}

#[test]
fn messy_corpus_follows_rules() {
    let cases: Vec<Case> = serde_json::from_str(include_str!("fixtures/parse_corpus.json")).unwrap();
    assert_eq!(cases.len(), 20);
    for c in &cases {
        assert_eq!(outcome(&c.raw), c.expect, "case {}", c.name);
    }
}

#[test]
fn numerals_round_trip() {
    for l in MmiLevel::all() {
        let (got, _) = parse_response(&serialize_response(l, "because")).unwrap();
        assert_eq!(got, l);
        assert_eq!(MmiLevel::from_roman(l.roman()), Some(l));
    }
}

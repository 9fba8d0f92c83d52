mod common;

use std::collections::BTreeSet;

use common::*;
use orchestrator_core::embedding::HashEmbedder;
use orchestrator_core::evaluation::score_decisions;
use orchestrator_core::metrics::{micro_f1, rouge_l};
use orchestrator_core::orchestrator::{AgentSpec, LabeledPrompt, Registry, RoutingDecision};
use orchestrator_core::runtime::{product_recognize, Catalog};
use rand::Rng;

const VOCAB: &[&str] = &["the", "cat", "sat", "ran", "on", "mat", "a", "dog"];

fn random_sentence(r: &mut impl Rng) -> String {
    let n = r.random_range(0..8);
    (0..n).map(|_| VOCAB[r.random_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
}

#[test]
fn rouge_l_matches_brute_force_on_1000_cases() {
    let mut r = rng(100);
    for _ in 0..1000 {
        let (a, b) = (random_sentence(&mut r), random_sentence(&mut r));
        let got = rouge_l(&a, &b);
        let want = brute_rouge_l(&a, &b);
        assert!((got - want).abs() < 1e-12, "{a:?} vs {b:?}: {got} != {want}");
        assert!((0.0..=1.0).contains(&got));
    }
}

#[test]
fn rouge_l_fixed_cases() {
    assert_eq!(rouge_l("a b c", "a b c"), 1.0);
    assert_eq!(rouge_l("a b", "c d"), 0.0);
    assert_eq!(rouge_l("", ""), 1.0);
    assert_eq!(rouge_l("", "x"), 0.0);
}

fn random_labels(r: &mut impl Rng) -> BTreeSet<String> {
    (0..r.random_range(0..4)).map(|_| format!("l{}", r.random_range(0..5))).collect()
}

#[test]
fn micro_f1_matches_brute_force_on_1000_cases() {
    let mut r = rng(101);
    for _ in 0..1000 {
        let pairs: Vec<_> = (0..r.random_range(1..6)).map(|_| (random_labels(&mut r), random_labels(&mut r))).collect();
        let got = micro_f1(&pairs);
        let want = brute_micro_f1(&pairs);
        assert!((got - want).abs() < 1e-12);
    }
}

fn tiny_registry() -> Registry {
    let e = HashEmbedder::new(16, (3, 5)).unwrap();
    let mut reg = Registry::new();
    reg.register_agent(AgentSpec::new("a", "A", "alpha"), &e).unwrap();
    reg.register_agent(AgentSpec::new("b", "B", "beta"), &e).unwrap();
    reg.register_agent(AgentSpec::separator("sep", "test"), &e).unwrap();
    reg
}

fn decision(selected: &[&str], rest: &[&str]) -> RoutingDecision {
    let ranked = selected.iter().chain(&["sep"]).chain(rest).enumerate().map(|(i, id)| (id.to_string(), -(i as f64))).collect();
    RoutingDecision {
        ranked,
        selected: selected.iter().map(|s| s.to_string()).collect(),
        separator_id: "sep".into(),
        model_version: 1,
        registry_revision: 3,
    }
}

fn prompt(label: &str) -> LabeledPrompt {
    LabeledPrompt { text: label.into(), positive_path: vec![label.into()], negatives: vec![] }
}

#[test]
fn perfect_and_empty_routers() {
    let reg = tiny_registry();
    let prompts = vec![prompt("a"), prompt("b"), prompt("a")];
    let perfect = vec![decision(&["a"], &["b"]), decision(&["b"], &["a"]), decision(&["a"], &["b"])];
    let r = score_decisions(&prompts, &perfect, &reg, "t");
    assert_eq!(r.micro_f1, 1.0);
    assert_eq!(r.per_level_accuracy[&1], 1.0);
    let empty = vec![decision(&[], &["a", "b"]); 3];
    assert_eq!(score_decisions(&prompts, &empty, &reg, "t").micro_f1, 0.0);
}

#[test]
fn matcher_agrees_with_scan_oracle_on_fixture_gazetteer() {
    let catalog = Catalog::fixture();
    let gaz = catalog.gazetteer();
    let names: Vec<&str> = gaz.names().collect();
    let fillers = ["compare", "and", "the", "price", "of", "I", "love", "teamsy", "excel2", "vs", ",", "?"];
    let mut r = rng(102);
    for _ in 0..500 {
        let n = r.random_range(0..10);
        let text = (0..n)
            .map(|_| if r.random_bool(0.4) { names[r.random_range(0..names.len())] } else { fillers[r.random_range(0..fillers.len())] })
            .collect::<Vec<_>>()
            .join(" ");
        let text = if r.random_bool(0.5) { text.to_uppercase() } else { text };
        let got: Vec<(String, usize, usize)> = product_recognize(&text, &gaz).into_iter().map(|m| (m.entity, m.span.0, m.span.1)).collect();
        assert_eq!(got, scan_matches(&text, &names), "{text:?}");
    }
}

#[test]
fn matcher_examples() {
    let gaz = Catalog::fixture().gazetteer();
    let m = product_recognize("I love Teams Essential", &gaz);
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].entity, "Teams Essential");
    assert_eq!(m[0].span, (7, 21));
    let m = product_recognize("Compare Excel and Teams", &gaz);
    let names: Vec<&str> = m.iter().map(|x| x.entity.as_str()).collect();
    assert_eq!(names, ["Excel", "Teams"]);
    assert!(product_recognize("nothing to see here", &gaz).is_empty());
}

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use orchestrator_core::orchestrator::RoutingDecision;
use orchestrator_core::pipeline::{standard_plans, PRICE_PLAN};
use orchestrator_core::planner::{extract_features, FeatureSchema};
use orchestrator_core::runtime::{
    chat_respond, extract_signals, product_recognize, update_memory, Action, AgentHost, Catalog, ChatAgent, ChatMode,
    ConversationState, Extraction, Role, Turn, KNOWN_LOCALES,
};
use orchestrator_core::transport::RecordedTransport;
use serde_json::json;

fn price_routing() -> RoutingDecision {
    RoutingDecision {
        ranked: vec![("ask_for_price".into(), 2.0), ("separator".into(), 1.0)],
        selected: vec!["ask_for_price".into()],
        separator_id: "separator".into(),
        model_version: 1,
        registry_revision: 1,
    }
}

#[test]
fn every_fixture_price_renders_for_its_locale() {
    let catalog = Arc::new(Catalog::fixture());
    let host = AgentHost::builtin(catalog.clone());
    let plan = &standard_plans()[PRICE_PLAN];
    for product in &catalog.products {
        for row in &product.rows {
            let mut state = ConversationState::new("c").with_locale(&row.locale);
            let prompt = format!("How much is {}?", product.names[0]);
            let r = host.execute(plan, &prompt, &mut state, Some(&price_routing())).unwrap();
            let want = catalog.db_lookup(&product.product_id, &row.locale).unwrap();
            let shown = r.actions.iter().find_map(|a| match a {
                Action::ShowPrice { price, currency, .. } => Some((price.clone(), currency.clone())),
                _ => None,
            });
            assert_eq!(shown, Some((want.price.to_string(), want.currency.clone())), "{} {}", product.product_id, row.locale);
            assert!(r.response_text.contains(&format!("{} {}", want.price, want.currency)));
        }
    }
}

#[test]
fn unknown_locale_row_falls_back_to_handoff() {
    let catalog = Arc::new(Catalog::fixture());
    let host = AgentHost::builtin(catalog.clone());
    let product = catalog.products.iter().find(|p| KNOWN_LOCALES.iter().any(|l| !p.rows.iter().any(|r| r.locale == *l))).unwrap();
    let missing = KNOWN_LOCALES.iter().find(|l| !product.rows.iter().any(|r| r.locale == **l)).unwrap();
    let mut state = ConversationState::new("c").with_locale(missing);
    let r = host.execute(&standard_plans()[PRICE_PLAN], &format!("price of {}", product.names[0]), &mut state, Some(&price_routing())).unwrap();
    assert!(r.used_default_path);
    let db = r.steps_taken.iter().find(|s| s.agent_id == "database").unwrap();
    assert_eq!(db.attempt_count, 2);
}

#[test]
fn locale_persists_and_context_carries_into_follow_up() {
    let gaz = Catalog::fixture().gazetteer();
    let cart: BTreeMap<String, String> = [("page".to_string(), "cart".to_string()), ("cart".to_string(), "m365_business_standard".to_string())].into();
    let t1 = "Je voudrais M365 Business Standard fr-FR";
    let ex1 = extract_signals(t1, &gaz, Some(&cart));
    let state = update_memory(ConversationState::new("c"), Turn::new(Role::User, t1), &ex1);
    assert_eq!(state.locale(), "fr-FR");

    let t2 = "Do I have to use Outlook?";
    let ex2 = extract_signals(t2, &gaz, None);
    let state = update_memory(state, Turn::new(Role::User, t2), &ex2);
    assert_eq!(state.locale(), "fr-FR");
    assert_eq!(state.short_term.get("cart").map(String::as_str), Some("m365_business_standard"));

    // Features for the follow-up are computed before its turn is appended.
    let mut before = state.clone();
    before.turns.pop();
    let schema = FeatureSchema::new(vec!["ask_for_price".into()]);
    let f = extract_features(t2, &price_routing(), &before, &product_recognize(t2, &gaz), &schema);
    assert_eq!(f.get("multi_turn_context", &schema), Some(1.0));
    assert_eq!(f.get("turn_index", &schema), Some(1.0));

    let unchanged = update_memory(state.clone(), Turn::new(Role::User, "ok"), &Extraction::default());
    assert_eq!(unchanged.short_term, state.short_term);
    assert_eq!(unchanged.long_term, state.long_term);
    assert_eq!(unchanged.turns.len(), state.turns.len() + 1);
}

#[test]
fn first_turn_features_with_separator_on_top() {
    let routing = RoutingDecision {
        ranked: vec![("separator".into(), 1.0), ("ask_for_price".into(), 0.5)],
        selected: vec![],
        separator_id: "separator".into(),
        model_version: 1,
        registry_revision: 1,
    };
    let schema = FeatureSchema::new(vec!["ask_for_price".into(), "separator".into()]);
    let state = ConversationState::new("c");
    let f = extract_features("hello there", &routing, &state, &[], &schema);
    assert_eq!(f.get("separator_top", &schema), Some(1.0));
    assert_eq!(f.get("num_entities", &schema), Some(0.0));
    assert_eq!(f.get("turn_index", &schema), Some(0.0));
    assert_eq!(f, extract_features("hello there", &routing, &state, &[], &schema));
}

#[test]
fn remote_chat_replays_recorded_transcript() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/chat_transcript.json");
    let transport = Arc::new(RecordedTransport::from_file(&path).unwrap());
    let mode = ChatMode::Remote {
        transport: transport.clone(),
        url: "http://chat.local/v1/chat/completions".into(),
        model: "desk-chat".into(),
        token: None,
    };
    let facts = [("product_name".to_string(), json!("M365 Business Standard"))].into();
    let state = ConversationState::new("c");
    let text = chat_respond(&mode, &state, "answer briefly", &facts, "How much is it?").unwrap();
    assert_eq!(text, "M365 Business Standard is 150.00 USD per user/year.");
    assert!(chat_respond(&mode, &state, "answer briefly", &facts, "again").is_err());
    assert_eq!(transport.consumed(), 2);

    let agent = ChatAgent::remote(Arc::new(RecordedTransport::new(vec![])), "http://x/v1/chat/completions", "m", "i");
    let mut host = AgentHost::builtin(Arc::new(Catalog::fixture()));
    host.insert("remote_chat", Arc::new(agent));
    let plan = orchestrator_core::planner::Plan {
        steps: vec![orchestrator_core::planner::PlanStep::new("remote_chat").with_retries(1)],
        default_path: "human_handoff".into(),
    };
    let r = host.execute(&plan, "hi", &mut ConversationState::new("c"), None).unwrap();
    assert!(r.used_default_path);
}

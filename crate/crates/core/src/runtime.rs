//! Plan execution over conversable agents with per-step retries and a
//! default-path fallback, plus the built-in desk-scale agents, the product
//! catalog and conversation memory.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::orchestrator::RoutingDecision;
use crate::planner::Plan;
use crate::transport::Transport;

pub const DEFAULT_LOCALE: &str = "en-US";
pub const KNOWN_LOCALES: &[&str] = &["en-US", "en-GB", "fr-FR", "de-DE", "es-ES", "ja-JP"];

pub fn is_known_locale(code: &str) -> bool {
    KNOWN_LOCALES.contains(&code)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub timestamp_ms: u64,
}

impl Turn {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        let timestamp_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        Turn { role, text: text.into(), timestamp_ms }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConversationState {
    pub conversation_id: String,
    pub turns: Vec<Turn>,
    /// Current page / cart context and pending entities; replaced per turn.
    pub short_term: BTreeMap<String, String>,
    /// Locale and user preferences; persists across turns.
    pub long_term: BTreeMap<String, String>,
}

impl ConversationState {
    pub fn new(conversation_id: impl Into<String>) -> Self {
        ConversationState { conversation_id: conversation_id.into(), ..Default::default() }
    }

    pub fn with_locale(mut self, locale: &str) -> Self {
        if is_known_locale(locale) {
            self.long_term.insert("locale".into(), locale.into());
        }
        self
    }

    pub fn locale(&self) -> &str {
        self.long_term.get("locale").map(String::as_str).unwrap_or(DEFAULT_LOCALE)
    }

    /// Number of user turns before the current one.
    pub fn user_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::User).count()
    }

    /// Applies one turn's extracted signals without appending a turn.
    pub fn apply_extraction(&mut self, extracted: &Extraction) {
        if !extracted.context.is_empty() {
            self.short_term = extracted.context.clone();
        }
        if !extracted.entities.is_empty() {
            self.short_term.insert("entities".into(), extracted.entities.join(","));
        }
        if let Some(locale) = extracted.locale.as_deref().filter(|l| is_known_locale(l)) {
            self.long_term.insert("locale".into(), locale.into());
        }
    }
}

/// Signals pulled out of one user turn.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub entities: Vec<String>,
    pub locale: Option<String>,
    pub context: BTreeMap<String, String>,
}

impl Extraction {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.locale.is_none() && self.context.is_empty()
    }
}

/// Memory update: short-term context is replaced when the turn supplies one,
/// long-term values merge, and the turn is appended.
pub fn update_memory(mut state: ConversationState, turn: Turn, extracted: &Extraction) -> ConversationState {
    state.apply_extraction(extracted);
    state.turns.push(turn);
    state
}

/// Entities and locale mentioned in `text`; `page_context` is the caller's
/// current page or cart state, if any.
pub fn extract_signals(text: &str, gazetteer: &Gazetteer, page_context: Option<&BTreeMap<String, String>>) -> Extraction {
    let locale_re = Regex::new(r"\b([a-z]{2}-[A-Z]{2})\b").expect("static regex");
    let locale = locale_re
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .find(|l| is_known_locale(l));
    Extraction {
        entities: product_recognize(text, gazetteer).into_iter().map(|m| m.product_id).collect(),
        locale,
        context: page_context.cloned().unwrap_or_default(),
    }
}

/// Decimal money amount with two fraction digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Price {
    pub cents: u64,
}

impl Price {
    pub fn parse(s: &str) -> Option<Price> {
        let (whole, frac) = s.split_once('.')?;
        if whole.is_empty() || frac.len() != 2 || !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return None;
        }
        Some(Price { cents: whole.parse::<u64>().ok()? * 100 + frac.parse::<u64>().ok()? })
    }
}

impl std::fmt::Display for Price {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{:02}", self.cents / 100, self.cents % 100)
    }
}

impl Serialize for Price {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Price {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Price::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("price {s:?} is not a two-digit decimal")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub locale: String,
    pub currency: String,
    pub price: Price,
    pub term: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogProduct {
    pub product_id: String,
    pub names: Vec<String>,
    pub rows: Vec<PriceRow>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown product {0}")]
    UnknownProduct(String),
    #[error("no {locale} price for {product}")]
    UnknownLocale { product: String, locale: String },
    #[error("catalog: {0}")]
    Parse(String),
}

/// Versioned product catalog. Prices in the shipped fixture are synthetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub version: String,
    pub products: Vec<CatalogProduct>,
}

impl Catalog {
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        serde_json::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|e| CatalogError::Parse(e.to_string()))?;
        Catalog::from_json(&text)
    }

    /// The catalog bundled with the crate.
    pub fn fixture() -> Self {
        Catalog::from_json(include_str!("../fixtures/catalog.json")).expect("bundled catalog parses")
    }

    pub fn product(&self, product_id: &str) -> Option<&CatalogProduct> {
        self.products.iter().find(|p| p.product_id == product_id)
    }

    pub fn db_lookup(&self, product_id: &str, locale: &str) -> Result<&PriceRow, CatalogError> {
        let product = self.product(product_id).ok_or_else(|| CatalogError::UnknownProduct(product_id.into()))?;
        product.rows.iter().find(|r| r.locale == locale).ok_or_else(|| CatalogError::UnknownLocale {
            product: product_id.into(),
            locale: locale.into(),
        })
    }

    pub fn gazetteer(&self) -> Gazetteer {
        Gazetteer::new(
            self.products
                .iter()
                .flat_map(|p| p.names.iter().map(move |n| (n.clone(), p.product_id.clone()))),
        )
    }
}

/// Surface names mapped to product ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gazetteer {
    entries: Vec<(Vec<char>, String, String)>,
}

fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

impl Gazetteer {
    pub fn new(names: impl IntoIterator<Item = (String, String)>) -> Self {
        let entries = names
            .into_iter()
            .filter(|(n, _)| !n.trim().is_empty())
            .map(|(name, id)| (name.chars().map(fold).collect(), name, id))
            .collect();
        Gazetteer { entries }
    }

    /// One name per line; the id is the name itself.
    pub fn from_lines(text: &str) -> Self {
        Gazetteer::new(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(|l| (l.to_string(), l.to_string())))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Gazetteer::from_lines(&std::fs::read_to_string(path)?))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(_, n, _)| n.as_str())
    }

    pub fn product_id(&self, name: &str) -> Option<&str> {
        self.entries.iter().find(|(_, n, _)| n == name).map(|(_, _, id)| id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMatch {
    /// Gazetteer surface name.
    pub entity: String,
    pub product_id: String,
    /// Character offsets of the first and last matched characters.
    pub span: (usize, usize),
}

/// Case-insensitive, longest-match, non-overlapping, left-to-right
/// recognition of gazetteer names on word boundaries.
pub fn product_recognize(text: &str, gazetteer: &Gazetteer) -> Vec<EntityMatch> {
    let chars: Vec<char> = text.chars().map(fold).collect();
    let boundary = |i: usize| i == 0 || i >= chars.len() || !chars[i].is_alphanumeric() || !chars[i - 1].is_alphanumeric();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !boundary(i) {
            i += 1;
            continue;
        }
        let best = gazetteer
            .entries
            .iter()
            .filter(|(folded, _, _)| {
                let end = i + folded.len();
                end <= chars.len() && chars[i..end] == folded[..] && boundary(end)
            })
            .max_by_key(|(folded, _, _)| folded.len());
        match best {
            Some((folded, name, id)) => {
                out.push(EntityMatch { entity: name.clone(), product_id: id.clone(), span: (i, i + folded.len() - 1) });
                i += folded.len();
            }
            None => i += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    HumanHandoff { reason: String },
    ShowPrice { product_id: String, price: String, currency: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub from_agent: String,
    pub to_agent: String,
    pub payload: BTreeMap<String, Value>,
    pub text: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentOutput {
    pub payload: BTreeMap<String, Value>,
    pub text: Option<String>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct AgentFailure(pub String);

/// What an agent sees when invoked.
pub struct AgentContext<'a> {
    pub prompt: &'a str,
    pub state: &'a ConversationState,
    pub messages: &'a [AgentMessage],
    pub settings: &'a BTreeMap<String, String>,
    pub routing: Option<&'a RoutingDecision>,
    /// Set when the agent runs as the default path.
    pub failure_reason: Option<&'a str>,
}

impl AgentContext<'_> {
    /// Latest value of `key` across prior agents' payloads.
    pub fn fact(&self, key: &str) -> Option<&Value> {
        self.messages.iter().rev().find_map(|m| m.payload.get(key))
    }

    /// Merged payloads, later agents overriding earlier ones.
    pub fn facts(&self) -> BTreeMap<String, Value> {
        let mut all = BTreeMap::new();
        for m in self.messages {
            all.extend(m.payload.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        all
    }

    /// Conversation locale wins over the plan's static setting.
    pub fn locale(&self) -> String {
        self.state
            .long_term
            .get("locale")
            .or_else(|| self.settings.get("locale"))
            .cloned()
            .unwrap_or_else(|| DEFAULT_LOCALE.into())
    }
}

pub trait ConversableAgent: Send + Sync {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub agent_id: String,
    pub attempt_count: u32,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub response_text: String,
    pub actions: Vec<Action>,
    pub steps_taken: Vec<StepRecord>,
    pub used_default_path: bool,
    /// Total agent invocations, default path included.
    pub invocations: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("plan invalid: {0}")]
    PlanInvalid(String),
    #[error("default path {agent} failed after step failure ({reason})")]
    DefaultPathFailed { agent: String, reason: String, steps_taken: Vec<StepRecord> },
}

pub const APOLOGY: &str = "Sorry, something went wrong on our side. Please try again later.";

/// Executable agents by id.
#[derive(Clone, Default)]
pub struct AgentHost {
    agents: BTreeMap<String, Arc<dyn ConversableAgent>>,
}

impl AgentHost {
    pub fn new() -> Self {
        AgentHost::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, agent: Arc<dyn ConversableAgent>) {
        self.agents.insert(id.into(), agent);
    }

    pub fn contains(&self, id: &str) -> bool {
        self.agents.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.agents.keys().map(String::as_str)
    }

    /// The built-in e-commerce agents over a catalog.
    pub fn builtin(catalog: Arc<Catalog>) -> Self {
        let gazetteer = Arc::new(catalog.gazetteer());
        let mut host = AgentHost::new();
        host.insert("echo", Arc::new(EchoAgent));
        host.insert("always_fail", Arc::new(AlwaysFail));
        host.insert("business_intent", Arc::new(BusinessIntentAgent));
        host.insert("multi_turn", Arc::new(MultiTurnAgent));
        host.insert("product_recognition", Arc::new(ProductRecognitionAgent { gazetteer }));
        host.insert("database", Arc::new(DatabaseAgent { catalog: catalog.clone() }));
        host.insert(
            "ask_for_price",
            Arc::new(ChatAgent::template("The price of {product_name} is {price} {currency} {term}.").with_price_action()),
        );
        host.insert("compare_products", Arc::new(CompareAgent { catalog }));
        host.insert(
            "general_chat",
            Arc::new(ChatAgent::template("Thanks for your question. Here is some general information about our products.")),
        );
        host.insert("human_handoff", Arc::new(HandoffAgent));
        host
    }

    fn check_plan(&self, plan: &Plan) -> Result<(), RuntimeError> {
        if plan.steps.is_empty() {
            return Err(RuntimeError::PlanInvalid("plan has no steps".into()));
        }
        for id in plan.steps.iter().map(|s| &s.agent_id).chain(std::iter::once(&plan.default_path)) {
            if !self.contains(id) {
                return Err(RuntimeError::PlanInvalid(format!("agent {id} is not hosted")));
            }
        }
        Ok(())
    }

    /// Runs `plan` for one user turn. Steps run in order; a failing step is
    /// retried up to its budget, after which the default path runs once and
    /// execution stops. The user turn and one assistant turn are appended to
    /// `state` in every outcome other than an invalid plan.
    pub fn execute(
        &self,
        plan: &Plan,
        prompt: &str,
        state: &mut ConversationState,
        routing: Option<&RoutingDecision>,
    ) -> Result<ExecutionResult, RuntimeError> {
        self.check_plan(plan)?;
        let mut messages: Vec<AgentMessage> = Vec::new();
        let mut steps_taken = Vec::new();
        let mut actions = Vec::new();
        let mut response: Option<String> = None;
        let mut invocations = 0u32;
        let mut failure: Option<String> = None;

        for (i, step) in plan.steps.iter().enumerate() {
            let agent = &self.agents[&step.agent_id];
            let mut attempts = 0u32;
            let outcome = loop {
                attempts += 1;
                invocations += 1;
                let ctx = AgentContext {
                    prompt,
                    state,
                    messages: &messages,
                    settings: &step.settings,
                    routing,
                    failure_reason: None,
                };
                match agent.invoke(&ctx) {
                    Ok(out) => break Ok(out),
                    Err(e) if attempts <= step.retry_budget => {
                        log::debug!("{} attempt {attempts} failed: {e}", step.agent_id);
                    }
                    Err(e) => break Err(e),
                }
            };
            match outcome {
                Ok(out) => {
                    steps_taken.push(StepRecord { agent_id: step.agent_id.clone(), attempt_count: attempts, status: StepStatus::Ok });
                    if let Some(t) = out.text.clone().filter(|t| !t.is_empty()) {
                        response = Some(t);
                    }
                    actions.extend(out.actions);
                    let to_agent = plan.steps.get(i + 1).map(|s| s.agent_id.clone()).unwrap_or_else(|| "user".into());
                    messages.push(AgentMessage { from_agent: step.agent_id.clone(), to_agent, payload: out.payload, text: out.text });
                }
                Err(e) => {
                    steps_taken.push(StepRecord { agent_id: step.agent_id.clone(), attempt_count: attempts, status: StepStatus::Failed });
                    failure = Some(format!("{}: {e}", step.agent_id));
                    break;
                }
            }
        }

        state.turns.push(Turn::new(Role::User, prompt));

        let mut used_default_path = false;
        if let Some(reason) = failure {
            used_default_path = true;
            invocations += 1;
            let ctx = AgentContext {
                prompt,
                state,
                messages: &messages,
                settings: &BTreeMap::new(),
                routing,
                failure_reason: Some(&reason),
            };
            match self.agents[&plan.default_path].invoke(&ctx) {
                Ok(out) => {
                    response = out.text.or(response);
                    actions.extend(out.actions);
                }
                Err(e) => {
                    state.turns.push(Turn::new(Role::Assistant, APOLOGY));
                    return Err(RuntimeError::DefaultPathFailed {
                        agent: plan.default_path.clone(),
                        reason: format!("{reason}; default path: {e}"),
                        steps_taken,
                    });
                }
            }
        }

        let response_text = response.unwrap_or_default();
        state.turns.push(Turn::new(Role::Assistant, response_text.clone()));
        Ok(ExecutionResult { response_text, actions, steps_taken, used_default_path, invocations })
    }
}

pub struct EchoAgent;

impl ConversableAgent for EchoAgent {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        Ok(AgentOutput { text: Some(ctx.prompt.to_string()), ..Default::default() })
    }
}

pub struct AlwaysFail;

impl ConversableAgent for AlwaysFail {
    fn invoke(&self, _ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        Err(AgentFailure("always fails".into()))
    }
}

/// Fails its first `failures` invocations, then echoes. Counts calls.
pub struct FlakyAgent {
    failures: usize,
    calls: AtomicUsize,
}

impl FlakyAgent {
    pub fn new(failures: usize) -> Self {
        FlakyAgent { failures, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ConversableAgent for FlakyAgent {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.failures {
            Err(AgentFailure(format!("transient failure {}", n + 1)))
        } else {
            EchoAgent.invoke(ctx)
        }
    }
}

/// Records the routed intent.
pub struct BusinessIntentAgent;

impl ConversableAgent for BusinessIntentAgent {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        let routing = ctx.routing.ok_or_else(|| AgentFailure("no routing decision available".into()))?;
        let intent = routing.selected.first().cloned().unwrap_or_else(|| routing.separator_id.clone());
        let mut payload = BTreeMap::new();
        payload.insert("intent".into(), json!(intent));
        payload.insert("selected".into(), json!(routing.selected));
        Ok(AgentOutput { payload, ..Default::default() })
    }
}

/// Surfaces short-term context from earlier turns.
pub struct MultiTurnAgent;

impl ConversableAgent for MultiTurnAgent {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        let mut payload = BTreeMap::new();
        payload.insert("multi_turn".into(), json!(ctx.state.user_turns() > 0 && !ctx.state.short_term.is_empty()));
        payload.insert("context".into(), json!(ctx.state.short_term));
        payload.insert("locale".into(), json!(ctx.locale()));
        Ok(AgentOutput { payload, ..Default::default() })
    }
}

pub struct ProductRecognitionAgent {
    pub gazetteer: Arc<Gazetteer>,
}

impl ConversableAgent for ProductRecognitionAgent {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        let mut ids: Vec<String> = product_recognize(ctx.prompt, &self.gazetteer).into_iter().map(|m| m.product_id).collect();
        if ids.is_empty() {
            // Fall back to entities carried over in short-term memory.
            if let Some(carried) = ctx.state.short_term.get("entities") {
                ids = carried.split(',').filter(|s| !s.is_empty()).map(String::from).collect();
            }
        }
        let mut payload = BTreeMap::new();
        payload.insert("entities".into(), json!(ids));
        Ok(AgentOutput { payload, ..Default::default() })
    }
}

fn first_entity(ctx: &AgentContext<'_>) -> Option<String> {
    ctx.fact("entities")?.as_array()?.first()?.as_str().map(String::from)
}

pub struct DatabaseAgent {
    pub catalog: Arc<Catalog>,
}

impl ConversableAgent for DatabaseAgent {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        let product = first_entity(ctx).ok_or_else(|| AgentFailure("no product recognized".into()))?;
        let locale = ctx.locale();
        let row = self.catalog.db_lookup(&product, &locale).map_err(|e| AgentFailure(e.to_string()))?;
        let name = self.catalog.product(&product).and_then(|p| p.names.first()).cloned().unwrap_or_else(|| product.clone());
        let mut payload = BTreeMap::new();
        payload.insert("product_id".into(), json!(product));
        payload.insert("product_name".into(), json!(name));
        payload.insert("price".into(), json!(row.price.to_string()));
        payload.insert("currency".into(), json!(row.currency));
        payload.insert("term".into(), json!(row.term));
        payload.insert("locale".into(), json!(locale));
        Ok(AgentOutput { payload, ..Default::default() })
    }
}

pub struct CompareAgent {
    pub catalog: Arc<Catalog>,
}

impl ConversableAgent for CompareAgent {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        let ids: Vec<String> = ctx
            .fact("entities")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
            .unwrap_or_default();
        if ids.len() < 2 {
            return Err(AgentFailure("need two products to compare".into()));
        }
        let locale = ctx.locale();
        let parts: Vec<String> = ids
            .iter()
            .take(2)
            .map(|id| {
                let row = self.catalog.db_lookup(id, &locale).map_err(|e| AgentFailure(e.to_string()))?;
                let name = self.catalog.product(id).and_then(|p| p.names.first()).cloned().unwrap_or_else(|| id.clone());
                Ok(format!("{name} costs {} {} {}", row.price, row.currency, row.term))
            })
            .collect::<Result<_, AgentFailure>>()?;
        Ok(AgentOutput { text: Some(format!("{}.", parts.join(", while "))), ..Default::default() })
    }
}

pub struct HandoffAgent;

impl ConversableAgent for HandoffAgent {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        let reason = ctx.failure_reason.unwrap_or("requested").to_string();
        Ok(AgentOutput {
            text: Some("Let me connect you with a customer service representative.".into()),
            actions: vec![Action::HumanHandoff { reason }],
            ..Default::default()
        })
    }
}

/// How a chat agent produces its reply.
pub enum ChatMode {
    /// `{name}` placeholders filled from the agents' facts.
    Template(String),
    /// Chat-completions-style endpoint.
    Remote { transport: Arc<dyn Transport>, url: String, model: String, token: Option<String> },
}

pub struct ChatAgent {
    pub mode: ChatMode,
    pub instructions: String,
    price_action: bool,
}

impl ChatAgent {
    pub fn template(template: impl Into<String>) -> Self {
        ChatAgent { mode: ChatMode::Template(template.into()), instructions: String::new(), price_action: false }
    }

    pub fn remote(transport: Arc<dyn Transport>, url: impl Into<String>, model: impl Into<String>, instructions: impl Into<String>) -> Self {
        ChatAgent {
            mode: ChatMode::Remote { transport, url: url.into(), model: model.into(), token: None },
            instructions: instructions.into(),
            price_action: false,
        }
    }

    /// Also emit a `show_price` action when price facts are present.
    pub fn with_price_action(mut self) -> Self {
        self.price_action = true;
        self
    }
}

fn fact_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn fill_template(template: &str, facts: &BTreeMap<String, Value>) -> Result<String, AgentFailure> {
    let re = Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex");
    let mut missing = None;
    let out = re.replace_all(template, |c: &regex::Captures<'_>| match facts.get(&c[1]) {
        Some(v) => fact_text(v),
        None => {
            missing.get_or_insert_with(|| c[1].to_string());
            String::new()
        }
    });
    match missing {
        Some(name) => Err(AgentFailure(format!("template variable {{{name}}} has no value"))),
        None => Ok(out.into_owned()),
    }
}

/// Produces reply text from conversation context, instructions and the
/// facts shared by earlier agents.
pub fn chat_respond(
    mode: &ChatMode,
    context: &ConversationState,
    instructions: &str,
    facts: &BTreeMap<String, Value>,
    prompt: &str,
) -> Result<String, AgentFailure> {
    match mode {
        ChatMode::Template(t) => fill_template(t, facts),
        ChatMode::Remote { transport, url, model, token } => {
            let mut messages = vec![json!({"role": "system", "content": instructions})];
            for t in &context.turns {
                let role = match t.role {
                    Role::User => "user",
                    _ => "assistant",
                };
                messages.push(json!({"role": role, "content": t.text}));
            }
            messages.push(json!({"role": "user", "content": format!("{prompt}\n\nFacts: {}", json!(facts))}));
            let body = json!({"model": model, "messages": messages});
            let resp = transport
                .post_json(url, token.as_deref(), &body)
                .map_err(|e| AgentFailure(format!("chat service unavailable: {e}")))?;
            resp.pointer("/choices/0/message/content")
                .and_then(Value::as_str)
                .map(String::from)
                .ok_or_else(|| AgentFailure("chat response lacks choices[0].message.content".into()))
        }
    }
}

impl ConversableAgent for ChatAgent {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        let facts = ctx.facts();
        let text = chat_respond(&self.mode, ctx.state, &self.instructions, &facts, ctx.prompt)?;
        let mut actions = Vec::new();
        if self.price_action {
            if let (Some(id), Some(price), Some(cur)) = (facts.get("product_id"), facts.get("price"), facts.get("currency")) {
                actions.push(Action::ShowPrice { product_id: fact_text(id), price: fact_text(price), currency: fact_text(cur) });
            }
        }
        Ok(AgentOutput { text: Some(text), actions, ..Default::default() })
    }
}

/// Agent behind a remote endpoint: POSTs `{prompt, facts, locale}` and
/// expects `{text?, payload?}`.
pub struct RemoteAgent {
    pub transport: Arc<dyn Transport>,
    pub url: String,
}

impl ConversableAgent for RemoteAgent {
    fn invoke(&self, ctx: &AgentContext<'_>) -> Result<AgentOutput, AgentFailure> {
        let body = json!({"prompt": ctx.prompt, "facts": ctx.facts(), "locale": ctx.locale()});
        let resp = self.transport.post_json(&self.url, None, &body).map_err(|e| AgentFailure(e.to_string()))?;
        let payload = match resp.get("payload") {
            None | Some(Value::Null) => BTreeMap::new(),
            Some(Value::Object(m)) => m.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            Some(_) => return Err(AgentFailure("malformed payload".into())),
        };
        Ok(AgentOutput { payload, text: resp.get("text").and_then(Value::as_str).map(String::from), actions: vec![] })
    }
}

//! The full copilot turn: signal extraction, routing, planning and plan
//! execution, plus planner trace synthesis and per-conversation state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::dataset::SyntheticDatasetSpec;
use crate::embedding::Embedder;
use crate::exec::Exec;
use crate::metrics::{rouge_l, EvalReport, ReportBuilder};
use crate::orchestrator::{build_groups, route, LabeledPrompt, OrchestratorError, Registry, RoutingDecision};
use crate::planner::{extract_features, train_tree, DecisionTree, FeatureSchema, FeatureVector, Plan, PlanStep, PlannerError, TraceRecord, TreeParams};
use crate::ranker::{train_with, RankError, RankerModel, TrainConfig};
use crate::runtime::{extract_signals, product_recognize, AgentHost, ConversationState, ExecutionResult, Gazetteer, RuntimeError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Data(#[from] crate::dataset::DataError),
    #[error("plan {0} is not in the plan table")]
    UnknownPlan(String),
}

pub const PRICE_PLAN: &str = "price";
pub const COMPARE_PLAN: &str = "compare";
pub const HANDOFF_PLAN: &str = "handoff";
pub const GENERAL_PLAN: &str = "general";

/// Plans over the built-in agents. `price` is the business-intent →
/// multi-turn → product recognition → database → ask-for-price path with a
/// human handoff as default path.
pub fn standard_plans() -> BTreeMap<String, Plan> {
    let handoff = "human_handoff".to_string();
    let mut plans = BTreeMap::new();
    plans.insert(
        PRICE_PLAN.into(),
        Plan {
            steps: vec![
                PlanStep::new("business_intent"),
                PlanStep::new("multi_turn"),
                PlanStep::new("product_recognition"),
                PlanStep::new("database").with_retries(1).with_setting("language", "en").with_setting("locale", "en-US"),
                PlanStep::new("ask_for_price").with_setting("language", "en"),
            ],
            default_path: handoff.clone(),
        },
    );
    plans.insert(
        COMPARE_PLAN.into(),
        Plan {
            steps: vec![
                PlanStep::new("business_intent"),
                PlanStep::new("product_recognition"),
                PlanStep::new("compare_products").with_setting("locale", "en-US"),
            ],
            default_path: handoff.clone(),
        },
    );
    plans.insert(HANDOFF_PLAN.into(), Plan { steps: vec![PlanStep::new("human_handoff")], default_path: handoff.clone() });
    plans.insert(
        GENERAL_PLAN.into(),
        Plan { steps: vec![PlanStep::new("business_intent"), PlanStep::new("general_chat")], default_path: handoff },
    );
    plans
}

/// The plan a human operator would pick for an intent; used to produce
/// reference responses.
pub fn reference_plan(intent: &str) -> &'static str {
    match intent {
        "ask_for_price" => PRICE_PLAN,
        "compare_products" => COMPARE_PLAN,
        "contact_human_support" => HANDOFF_PLAN,
        _ => GENERAL_PLAN,
    }
}

/// Everything one turn needs. Cheap to clone; all parts are shared.
#[derive(Clone)]
pub struct Copilot {
    pub embedder: Arc<dyn Embedder>,
    pub registry: Arc<Registry>,
    pub model: Arc<RankerModel>,
    pub tree: Arc<DecisionTree>,
    pub host: Arc<AgentHost>,
    pub gazetteer: Arc<Gazetteer>,
}

#[derive(Debug, Clone)]
pub struct TurnOutcome {
    pub routing: RoutingDecision,
    pub features: FeatureVector,
    pub plan_label: String,
    pub plan: Plan,
    pub result: Result<ExecutionResult, RuntimeError>,
}

impl Copilot {
    /// Routing and planning without executing.
    pub fn plan_turn(&self, state: &ConversationState, text: &str) -> Result<(RoutingDecision, FeatureVector, String), PipelineError> {
        let routing = route(&self.model, &self.registry, self.embedder.as_ref(), text)?;
        let entities = product_recognize(text, &self.gazetteer);
        let features = extract_features(text, &routing, state, &entities, &self.tree.schema);
        let label = self.tree.predict_label(&features)?.to_string();
        Ok((routing, features, label))
    }

    pub fn handle_turn(
        &self,
        state: &mut ConversationState,
        text: &str,
        page_context: Option<&BTreeMap<String, String>>,
    ) -> Result<TurnOutcome, PipelineError> {
        let extraction = extract_signals(text, &self.gazetteer, page_context);
        state.apply_extraction(&extraction);
        let (routing, features, plan_label) = self.plan_turn(state, text)?;
        let plan = self.tree.plan_table.get(&plan_label).cloned().ok_or_else(|| PipelineError::UnknownPlan(plan_label.clone()))?;
        let result = self.host.execute(&plan, text, state, Some(&routing));
        Ok(TurnOutcome { routing, features, plan_label, plan, result })
    }
}

/// Response text of running `plan` once on a fresh conversation.
fn run_plan(host: &AgentHost, plan: &Plan, text: &str, locale: &str, routing: &RoutingDecision) -> String {
    let mut state = ConversationState::new("trace").with_locale(locale);
    match host.execute(plan, text, &mut state, Some(routing)) {
        Ok(r) => r.response_text,
        Err(_) => String::new(),
    }
}

/// A planner training example: a prompt and the response it should get.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerExample {
    pub text: String,
    pub reference: String,
}

/// Reference responses: each prompt's intent-appropriate plan, executed.
pub fn reference_examples(
    prompts: &[LabeledPrompt],
    registry: &Registry,
    model: &RankerModel,
    embedder: &dyn Embedder,
    host: &AgentHost,
    plans: &BTreeMap<String, Plan>,
) -> Result<Vec<PlannerExample>, PipelineError> {
    prompts
        .iter()
        .map(|p| {
            let routing = route(model, registry, embedder, &p.text)?;
            let label = reference_plan(&p.positive_path[0]);
            let plan = plans.get(label).ok_or_else(|| PipelineError::UnknownPlan(label.into()))?;
            Ok(PlannerExample { text: p.text.clone(), reference: run_plan(host, plan, &p.text, "en-US", &routing) })
        })
        .collect()
}

/// Executes every candidate plan on every example and labels each with the
/// plan whose response scores best against the reference under ROUGE-L.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_traces(
    examples: &[PlannerExample],
    registry: &Registry,
    model: &RankerModel,
    embedder: &dyn Embedder,
    host: &AgentHost,
    gazetteer: &Gazetteer,
    schema: &FeatureSchema,
    plans: &BTreeMap<String, Plan>,
    exec: Exec,
) -> Result<Vec<TraceRecord>, PipelineError> {
    exec.try_map(examples, |_, ex| {
        let routing = route(model, registry, embedder, &ex.text)?;
        let state = ConversationState::new("trace");
        let entities = product_recognize(&ex.text, gazetteer);
        let features = extract_features(&ex.text, &routing, &state, &entities, schema);
        let outcomes: Vec<(String, f64)> = plans
            .iter()
            .map(|(label, plan)| (label.clone(), rouge_l(&run_plan(host, plan, &ex.text, "en-US", &routing), &ex.reference)))
            .collect();
        let best = crate::planner::best_plan_label(&outcomes, plans).expect("plan table is non-empty").to_string();
        let score = outcomes.iter().find(|(l, _)| *l == best).map_or(0.0, |o| o.1);
        Ok::<_, PipelineError>(TraceRecord { features, best_plan_label: best, outcome_score: score })
    })
}

/// Planner quality on held-out examples: `micro_f1` is plan-label accuracy
/// against the trace labels and `rouge_l` the mean end-to-end score.
pub fn eval_planner(copilot: &Copilot, examples: &[PlannerExample], traces: &[TraceRecord]) -> Result<EvalReport, PipelineError> {
    let mut b = ReportBuilder::default();
    for (ex, tr) in examples.iter().zip(traces) {
        let mut state = ConversationState::new("eval");
        let outcome = copilot.handle_turn(&mut state, &ex.text, None)?;
        let predicted: BTreeSet<String> = [outcome.plan_label.clone()].into();
        let gold: BTreeSet<String> = [tr.best_plan_label.clone()].into();
        b.add_decision(&predicted, &gold);
        let response = outcome.result.map(|r| r.response_text).unwrap_or_default();
        b.add_rouge(rouge_l(&response, &ex.reference));
    }
    Ok(b.finish(format!("tree:d{}:l{}", copilot.tree.depth, copilot.tree.leaf_count())))
}

/// Knobs for [`train_copilot`].
#[derive(Debug, Clone)]
pub struct CopilotTraining {
    pub router: TrainConfig,
    pub tree: TreeParams,
    /// Prompts per class used for planner traces.
    pub planner_prompts_per_class: usize,
    pub separator_domain: String,
    pub exec: Exec,
}

impl Default for CopilotTraining {
    fn default() -> Self {
        CopilotTraining {
            router: TrainConfig { learning_rate: 0.5, epochs: 40, batch_groups: 32, seed: 7, l2: 0.0 },
            tree: TreeParams::default(),
            planner_prompts_per_class: 4,
            separator_domain: "microsoft store".into(),
            exec: Exec::default(),
        }
    }
}

/// Trains router and planner from a synthetic spec and assembles a copilot.
pub fn train_copilot(
    spec: &SyntheticDatasetSpec,
    embedder: Arc<dyn Embedder>,
    host: Arc<AgentHost>,
    gazetteer: Arc<Gazetteer>,
    opts: &CopilotTraining,
) -> Result<Copilot, PipelineError> {
    let (train, _) = crate::dataset::generate_data(spec)?;
    let registry = spec.registry(embedder.as_ref(), &opts.separator_domain, true)?;
    let groups = build_groups(&train, &registry, embedder.as_ref())?;
    let model = train_with(&groups, &opts.router, opts.exec)?;
    let plans = standard_plans();
    let mut per_class: BTreeMap<&str, usize> = BTreeMap::new();
    let planner_prompts: Vec<LabeledPrompt> = train
        .iter()
        .filter(|p| {
            let n = per_class.entry(p.positive_path[0].as_str()).or_default();
            *n += 1;
            *n <= opts.planner_prompts_per_class
        })
        .cloned()
        .collect();
    let examples = reference_examples(&planner_prompts, &registry, &model, embedder.as_ref(), &host, &plans)?;
    let schema = FeatureSchema::new(registry.ids());
    let traces =
        synthesize_traces(&examples, &registry, &model, embedder.as_ref(), &host, &gazetteer, &schema, &plans, opts.exec)?;
    let tree = train_tree(&traces, schema, plans, opts.tree)?;
    Ok(Copilot {
        embedder,
        registry: Arc::new(registry),
        model: Arc::new(model),
        tree: Arc::new(tree),
        host,
        gazetteer,
    })
}

/// Conversation states keyed by id. Each conversation has its own lock so
/// one conversation runs one turn at a time while others proceed.
#[derive(Default)]
pub struct ConversationStore {
    inner: Mutex<HashMap<String, Arc<Mutex<ConversationState>>>>,
}

impl ConversationStore {
    pub fn new() -> Self {
        ConversationStore::default()
    }

    pub fn get(&self, conversation_id: &str) -> Arc<Mutex<ConversationState>> {
        let mut map = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(conversation_id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(ConversationState::new(conversation_id))))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

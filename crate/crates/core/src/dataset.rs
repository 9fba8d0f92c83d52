//! Labeled-prompt datasets: seeded synthetic generation with class holdout,
//! JSON-lines I/O, and ingestion of three-level hierarchical CSV data.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedder;
use crate::orchestrator::{AgentSpec, LabeledPrompt, OrchestratorError, Registry};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Registry(#[from] OrchestratorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClass {
    pub agent_id: String,
    pub name: String,
    pub description: String,
    /// Templates may use `{product}`, `{product2}` and `{prefix}`.
    pub templates: Vec<String>,
    #[serde(default)]
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub classes: Vec<SyntheticClass>,
    pub prompts_per_class: usize,
    pub seed: u64,
    pub holdout_fraction: f64,
    /// Classes kept out of the training split entirely.
    #[serde(default)]
    pub withheld_classes: Vec<String>,
    #[serde(default = "default_products")]
    pub products: Vec<String>,
    #[serde(default = "default_prefixes")]
    pub prefixes: Vec<String>,
}

fn default_products() -> Vec<String> {
    [
        "M365 Business Standard",
        "M365 Business Premium",
        "M365 Business Basic",
        "Teams Essential",
        "Excel",
        "Outlook",
        "Word",
        "PowerPoint",
        "OneDrive",
        "Exchange Online",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn default_prefixes() -> Vec<String> {
    ["", "hi, ", "quick question: ", "hello team, ", "please help: ", "excuse me, "].iter().map(|s| s.to_string()).collect()
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.classes.len() < 2 {
            return Err(DataError::InvalidSpec("need at least two classes".into()));
        }
        if let Some(c) = self.classes.iter().find(|c| c.templates.is_empty()) {
            return Err(DataError::InvalidSpec(format!("class {} has no templates", c.agent_id)));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(DataError::InvalidSpec(format!("holdout_fraction {} not in (0, 1)", self.holdout_fraction)));
        }
        if self.products.is_empty() {
            return Err(DataError::InvalidSpec("product vocabulary is empty".into()));
        }
        for w in &self.withheld_classes {
            if !self.classes.iter().any(|c| &c.agent_id == w) {
                return Err(DataError::InvalidSpec(format!("withheld class {w} is not defined")));
            }
        }
        Ok(())
    }

    /// Registry with one agent per class plus a catch-all separator.
    pub fn registry(&self, embedder: &dyn Embedder, separator_domain: &str, include_withheld: bool) -> Result<Registry, DataError> {
        let mut reg = Registry::new();
        reg.register_agent(AgentSpec::separator("separator", separator_domain), embedder)?;
        for c in &self.classes {
            if !include_withheld && self.withheld_classes.contains(&c.agent_id) {
                continue;
            }
            reg.register_agent(self.agent_spec(c), embedder)?;
        }
        Ok(reg)
    }

    pub fn agent_spec(&self, c: &SyntheticClass) -> AgentSpec {
        let mut spec = AgentSpec::new(&c.agent_id, &c.name, &c.description);
        spec.parent_id = c.parent.clone();
        spec
    }
}

fn fill(template: &str, rng: &mut ChaCha8Rng, products: &[String], prefixes: &[String]) -> String {
    let p1 = products.choose(rng).expect("non-empty");
    let p2 = loop {
        let p = products.choose(rng).expect("non-empty");
        if p != p1 || products.len() == 1 {
            break p;
        }
    };
    let prefix = prefixes.choose(rng).map(String::as_str).unwrap_or("");
    let body = template.replace("{product2}", p2).replace("{product}", p1);
    format!("{prefix}{body}")
}

/// Train and test splits. Deterministic in the seed.
pub fn generate_data(spec: &SyntheticDatasetSpec) -> Result<(Vec<LabeledPrompt>, Vec<LabeledPrompt>), DataError> {
    spec.validate()?;
    if spec.prompts_per_class == 0 {
        log::warn!("prompts_per_class is 0; emitting empty splits");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in &spec.classes {
        let mut path = vec![class.agent_id.clone()];
        if let Some(p) = &class.parent {
            path.push(p.clone());
        }
        let mut prompts: Vec<LabeledPrompt> = (0..spec.prompts_per_class)
            .map(|_| {
                let t = class.templates.choose(&mut rng).expect("validated non-empty");
                LabeledPrompt { text: fill(t, &mut rng, &spec.products, &spec.prefixes), positive_path: path.clone(), negatives: vec![] }
            })
            .collect();
        prompts.shuffle(&mut rng);
        let n_test = ((prompts.len() as f64) * spec.holdout_fraction).round() as usize;
        let train_part = prompts.split_off(n_test);
        test.extend(prompts);
        if !spec.withheld_classes.contains(&class.agent_id) {
            train.extend(train_part);
        }
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train, test))
}

fn class(id: &str, name: &str, description: &str, templates: &[&str]) -> SyntheticClass {
    SyntheticClass {
        agent_id: id.into(),
        name: name.into(),
        description: description.into(),
        templates: templates.iter().map(|s| s.to_string()).collect(),
        parent: None,
    }
}

/// Thirteen e-commerce copilot intents. The last four are the default
/// held-out set for growing-agent experiments.
pub fn ecommerce_classes() -> Vec<SyntheticClass> {
    vec![
        class("ask_for_price", "Ask for Price", "ask for the price and cost of a product subscription, how much it costs", &[
            "how much is {product}",
            "what does {product} cost per year",
            "price of {product} annual subscription",
            "how much do I pay for {product}",
            "what is the cost of {product} for my team",
            "{product} pricing please",
            "how much does {product} cost per user",
        ]),
        class("compare_products", "Compare Products", "compare two products and explain the differences between them", &[
            "compare {product} and {product2}",
            "what is the difference between {product} and {product2}",
            "{product} vs {product2}, which is better",
            "should I choose {product} or {product2}",
            "differences between {product} and {product2}",
        ]),
        class("contact_human_support", "Contact Human Support", "talk to a human support agent or customer service representative", &[
            "I want to talk to a human",
            "connect me with a support agent",
            "can I speak to a customer service representative about {product}",
            "get me a real person please",
            "I need a human agent to help with {product}",
        ]),
        class("non_microsoft_products", "Non-Microsoft Products", "questions about non-microsoft competitor products like google workspace, zoom or slack", &[
            "does google workspace work better than {product}",
            "can I use zoom instead of {product}",
            "how do I migrate from slack",
            "is dropbox cheaper",
            "tell me about google docs and gmail",
        ]),
        class("product_features", "Product Features", "what features and apps are included in a product", &[
            "what apps are included in {product}",
            "which features come with {product}",
            "does {product} include desktop apps",
            "list the features of {product}",
            "what is included in {product}",
        ]),
        class("technical_setup", "Technical Setup", "install, set up, configure or troubleshoot software", &[
            "how do I install {product}",
            "set up {product} on my mac",
            "configure {product} for my domain",
            "{product} will not install on windows",
            "troubleshoot {product} setup error",
        ]),
        class("billing_issue", "Billing Issue", "billing, invoice, payment method or unexpected charge problems", &[
            "I was charged twice for {product}",
            "where can I find my invoice for {product}",
            "update my payment method",
            "why is my bill higher this month",
            "billing problem with my {product} payment",
        ]),
        class("cancel_subscription", "Cancel Subscription", "cancel a subscription or request a refund", &[
            "cancel my {product} subscription",
            "how do I cancel {product}",
            "I want a refund for {product}",
            "stop auto renewal of {product}",
            "end my subscription and get my money back",
        ]),
        class("license_management", "License Management", "add, remove or assign user licenses and seats", &[
            "add five more licenses to {product}",
            "assign a {product} license to a new user",
            "remove a user seat from {product}",
            "how many licenses do I have left",
            "reassign licenses between users",
        ]),
        class("trial_signup", "Trial Signup", "sign up for a free trial to try a product", &[
            "can I try {product} for free",
            "start a free trial of {product}",
            "is there a trial version of {product}",
            "sign me up for the {product} trial",
            "free trial sign up",
        ]),
        class("order_status", "Order Status", "check order status, delivery and shipment tracking", &[
            "where is my order",
            "track my shipment of {product}",
            "what is the status of my order for {product}",
            "when will my order be delivered",
            "order tracking number please",
        ]),
        class("security_compliance", "Security and Compliance", "security, compliance, data privacy, encryption and gdpr questions", &[
            "is {product} gdpr compliant",
            "how is my data encrypted in {product}",
            "security and compliance certifications of {product}",
            "data privacy policy for {product}",
            "does {product} support encryption at rest",
        ]),
        class("partner_program", "Partner Program", "join the partner program, become a reseller partner", &[
            "how do I become a partner",
            "join the reseller partner program",
            "partner program benefits for selling {product}",
            "can my company resell {product} as a partner",
            "apply to the partner network",
        ]),
    ]
}

pub fn ecommerce_spec(prompts_per_class: usize, seed: u64, withheld: &[&str]) -> SyntheticDatasetSpec {
    SyntheticDatasetSpec {
        classes: ecommerce_classes(),
        prompts_per_class,
        seed,
        holdout_fraction: 0.2,
        withheld_classes: withheld.iter().map(|s| s.to_string()).collect(),
        products: default_products(),
        prefixes: default_prefixes(),
    }
}

pub fn write_jsonl(path: &Path, prompts: &[LabeledPrompt]) -> Result<(), DataError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in prompts {
        serde_json::to_writer(&mut f, p).map_err(|e| DataError::Parse { line: 0, message: e.to_string() })?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<LabeledPrompt>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: LabeledPrompt =
            serde_json::from_str(&line).map_err(|e| DataError::Parse { line: i + 1, message: e.to_string() })?;
        if p.positive_path.is_empty() {
            return Err(DataError::Parse { line: i + 1, message: "positive_path is empty".into() });
        }
        out.push(p);
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<LabeledPrompt>, DataError> {
    parse_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Rows of a `text,l1,l2,l3` CSV as labeled prompts (path deepest first,
/// ids namespaced by level) plus the hierarchy as a registry. Category
/// descriptions are the category names.
pub fn ingest_hierarchical_csv(
    reader: impl std::io::Read,
    embedder: &dyn Embedder,
    separator_domain: &str,
) -> Result<(Vec<LabeledPrompt>, Registry), DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Parse { line: 1, message: e.to_string() })?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let idx = [col("text"), col("l1"), col("l2"), col("l3")];
    let [Some(ti), Some(i1), Some(i2), Some(i3)] = idx else {
        return Err(DataError::Parse { line: 1, message: "expected columns text,l1,l2,l3".into() });
    };
    let mut nodes: BTreeMap<String, (String, Option<String>)> = BTreeMap::new();
    let mut prompts = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Parse { line: n + 2, message: e.to_string() })?;
        let get = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let (text, l1, l2, l3) = (get(ti), get(i1), get(i2), get(i3));
        if text.is_empty() || l1.is_empty() {
            continue;
        }
        let mut path = Vec::new();
        let id1 = format!("l1:{}", l1.to_lowercase());
        nodes.entry(id1.clone()).or_insert((l1.to_string(), None));
        path.push(id1.clone());
        if !l2.is_empty() {
            let id2 = format!("l2:{}/{}", l1.to_lowercase(), l2.to_lowercase());
            nodes.entry(id2.clone()).or_insert((l2.to_string(), Some(id1.clone())));
            path.push(id2.clone());
            if !l3.is_empty() {
                let id3 = format!("l3:{}/{}/{}", l1.to_lowercase(), l2.to_lowercase(), l3.to_lowercase());
                nodes.entry(id3.clone()).or_insert((l3.to_string(), Some(id2)));
                path.push(id3);
            }
        }
        path.reverse();
        prompts.push(LabeledPrompt { text: text.to_string(), positive_path: path, negatives: vec![] });
    }
    let mut reg = Registry::new();
    reg.register_agent(AgentSpec::separator("separator", separator_domain), embedder)?;
    // Ids sort as l1:* < l2:* < l3:*, so parents register first.
    for (id, (name, parent)) in nodes {
        let mut spec = AgentSpec::new(&id, &name, &name);
        spec.parent_id = parent;
        reg.register_agent(spec, embedder)?;
    }
    Ok((prompts, reg))
}

//! Decision-tree meta-planner: maps prompt-derived features to an inference
//! plan (ordered agent steps with settings, retry budgets and a fallback).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::RoutingDecision;
use crate::runtime::{ConversationState, EntityMatch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("no training records")]
    EmptyTraining,
    #[error("label {0} has no plan")]
    UnknownLabel(String),
    #[error("feature vector has {got} values, schema expects {expected}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("invalid tree parameters: {0}")]
    InvalidParams(String),
    #[error("invalid plan {label}: {reason}")]
    InvalidPlan { label: String, reason: String },
    #[error("tree file: {0}")]
    Persist(String),
}

pub const FEATURE_NAMES: [&str; 7] = [
    "top_agent_index",
    "separator_top",
    "num_selected",
    "num_entities",
    "turn_index",
    "prompt_token_count",
    "multi_turn_context",
];

/// Feature names plus the intent vocabulary used to encode the top-ranked
/// agent as a stable index (−1 for agents outside the vocabulary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    pub intents: Vec<String>,
}

impl FeatureSchema {
    pub fn new(intents: Vec<String>) -> Self {
        FeatureSchema { names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(), intents }
    }

    /// Schema with arbitrary feature names, for generic trace data.
    pub fn generic(n: usize) -> Self {
        FeatureSchema { names: (0..n).map(|i| format!("f{i}")).collect(), intents: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn intent_index(&self, agent_id: &str) -> f64 {
        self.intents.iter().position(|i| i == agent_id).map(|i| i as f64).unwrap_or(-1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn get(&self, name: &str, schema: &FeatureSchema) -> Option<f64> {
        schema.names.iter().position(|n| n == name).map(|i| self.0[i])
    }
}

/// Features for the planner, computed from upstream agent outputs: the
/// routing decision, conversation state and recognized entities.
pub fn extract_features(
    prompt_text: &str,
    routing: &RoutingDecision,
    conversation: &ConversationState,
    entities: &[EntityMatch],
    schema: &FeatureSchema,
) -> FeatureVector {
    let top = routing.top_agent().map(|id| schema.intent_index(id)).unwrap_or(-1.0);
    let multi_turn = conversation.user_turns() > 0 && !conversation.short_term.is_empty();
    FeatureVector(vec![
        top,
        routing.separator_top() as u8 as f64,
        routing.selected.len() as f64,
        entities.len() as f64,
        conversation.user_turns() as f64,
        prompt_text.split_whitespace().count() as f64,
        multi_turn as u8 as f64,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub agent_id: String,
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
    #[serde(default)]
    pub retry_budget: u32,
}

impl PlanStep {
    pub fn new(agent_id: impl Into<String>) -> Self {
        PlanStep { agent_id: agent_id.into(), settings: BTreeMap::new(), retry_budget: 0 }
    }

    pub fn with_retries(mut self, budget: u32) -> Self {
        self.retry_budget = budget;
        self
    }

    pub fn with_setting(mut self, key: &str, value: &str) -> Self {
        self.settings.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub default_path: String,
}

impl Plan {
    pub fn agent_ids(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.agent_id.as_str()).collect()
    }

    pub fn validate<'a>(&self, hosted: impl Fn(&str) -> bool + 'a) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("no steps".into());
        }
        self.steps
            .iter()
            .map(|s| s.agent_id.as_str())
            .chain(std::iter::once(self.default_path.as_str()))
            .find(|id| !hosted(id))
            .map_or(Ok(()), |id| Err(format!("agent {id} is not available")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub features: FeatureVector,
    pub best_plan_label: String,
    #[serde(default)]
    pub outcome_score: f64,
}

/// Picks the label of the best-scoring plan; ties go to the plan with fewer
/// steps, then to the lexicographically smaller label.
pub fn best_plan_label<'a>(outcomes: &'a [(String, f64)], plan_table: &BTreeMap<String, Plan>) -> Option<&'a str> {
    let steps = |l: &str| plan_table.get(l).map_or(usize::MAX, |p| p.steps.len());
    outcomes
        .iter()
        .min_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| steps(&a.0).cmp(&steps(&b.0)))
                .then_with(|| a.0.cmp(&b.0))
        })
        .map(|(l, _)| l.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 4, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub schema: FeatureSchema,
    /// Arena; the root is node 0.
    pub nodes: Vec<Node>,
    pub plan_table: BTreeMap<String, Plan>,
    pub depth: usize,
}

/// Candidate split: exact score `num / den` (higher is purer).
#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    num: u128,
    den: u128,
}

fn sum_sq(counts: &[u64]) -> u128 {
    counts.iter().map(|&c| (c as u128) * (c as u128)).sum()
}

fn majority(counts: &[u64]) -> usize {
    // `max_by_key` keeps the last maximum; iterate reversed so the lowest
    // index (smallest label) wins ties.
    counts.iter().enumerate().rev().max_by_key(|(_, c)| **c).map(|(i, _)| i).unwrap_or(0)
}

struct Builder<'a> {
    x: Vec<&'a [f64]>,
    y: Vec<usize>,
    n_labels: usize,
    labels: Vec<String>,
    params: TreeParams,
    nodes: Vec<Node>,
    depth: usize,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u64> {
        let mut c = vec![0u64; self.n_labels];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn best_split(&self, idx: &[usize], total: &[u64]) -> Option<Candidate> {
        let n = idx.len();
        let mut best: Option<Candidate> = None;
        let n_features = self.x.first().map_or(0, |r| r.len());
        for f in 0..n_features {
            let mut sorted = idx.to_vec();
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0u64; self.n_labels];
            for k in 1..n {
                left[self.y[sorted[k - 1]]] += 1;
                let lo = self.x[sorted[k - 1]][f];
                let hi = self.x[sorted[k]][f];
                if lo == hi || k < self.params.min_leaf || n - k < self.params.min_leaf {
                    continue;
                }
                let right: Vec<u64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let (nl, nr) = (k as u128, (n - k) as u128);
                let num = sum_sq(&left) * nr + sum_sq(&right) * nl;
                let den = nl * nr;
                let better = best.is_none_or(|b| num * b.den > b.num * den);
                if better {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Candidate { feature: f, threshold, num, den });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        self.depth = self.depth.max(depth);
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        let leaf = Node::Leaf { label: self.labels[majority(&counts)].clone() };
        self.nodes.push(leaf);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf {
            return id;
        }
        let Some(split) = self.best_split(&idx, &counts) else {
            return id;
        };
        // Only split when impurity strictly drops: child score > S / n.
        let parent_num = sum_sq(&counts);
        let parent_den = idx.len() as u128;
        if split.num * parent_den <= parent_num * split.den {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

/// Greedy CART over plan labels using Gini impurity.
///
/// Split candidates are midpoints between consecutive distinct values.
/// Impurities are compared exactly in integer arithmetic; ties go to the
/// lowest feature index, then the lowest threshold. Leaves predict the
/// majority label, ties to the lexicographically smallest.
pub fn train_tree(
    records: &[TraceRecord],
    schema: FeatureSchema,
    plan_table: BTreeMap<String, Plan>,
    params: TreeParams,
) -> Result<DecisionTree, PlannerError> {
    if records.is_empty() {
        return Err(PlannerError::EmptyTraining);
    }
    if params.min_leaf == 0 {
        return Err(PlannerError::InvalidParams("min_leaf must be at least 1".into()));
    }
    for r in records {
        if r.features.0.len() != schema.len() {
            return Err(PlannerError::SchemaMismatch { expected: schema.len(), got: r.features.0.len() });
        }
        if !plan_table.contains_key(&r.best_plan_label) {
            return Err(PlannerError::UnknownLabel(r.best_plan_label.clone()));
        }
        if r.features.0.iter().any(|v| !v.is_finite()) {
            return Err(PlannerError::InvalidParams("non-finite feature value".into()));
        }
    }
    let labels: Vec<String> = {
        let mut l: Vec<String> = records.iter().map(|r| r.best_plan_label.clone()).collect();
        l.sort();
        l.dedup();
        l
    };
    let mut b = Builder {
        x: records.iter().map(|r| r.features.0.as_slice()).collect(),
        y: records.iter().map(|r| labels.binary_search(&r.best_plan_label).expect("label collected")).collect(),
        n_labels: labels.len(),
        labels,
        params,
        nodes: Vec::new(),
        depth: 0,
    };
    b.build((0..records.len()).collect(), 0);
    Ok(DecisionTree { schema, nodes: b.nodes, plan_table, depth: b.depth })
}

impl DecisionTree {
    /// Single-leaf tree always answering `label`.
    pub fn constant(schema: FeatureSchema, label: &str, plan_table: BTreeMap<String, Plan>) -> Result<Self, PlannerError> {
        if !plan_table.contains_key(label) {
            return Err(PlannerError::UnknownLabel(label.into()));
        }
        Ok(DecisionTree { schema, nodes: vec![Node::Leaf { label: label.into() }], plan_table, depth: 0 })
    }

    pub fn predict_label(&self, features: &FeatureVector) -> Result<&str, PlannerError> {
        if features.0.len() != self.schema.len() {
            return Err(PlannerError::SchemaMismatch { expected: self.schema.len(), got: features.0.len() });
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { label } => return Ok(label),
                Node::Split { feature, threshold, left, right } => {
                    at = if features.0[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_plan(&self, features: &FeatureVector) -> Result<&Plan, PlannerError> {
        let label = self.predict_label(features)?;
        self.plan_table.get(label).ok_or_else(|| PlannerError::UnknownLabel(label.into()))
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Checks structure and that every plan's agents are available.
    pub fn validate(&self, hosted: impl Fn(&str) -> bool) -> Result<(), PlannerError> {
        for n in &self.nodes {
            match n {
                Node::Leaf { label } if !self.plan_table.contains_key(label) => {
                    return Err(PlannerError::UnknownLabel(label.clone()))
                }
                Node::Split { feature, left, right, .. }
                    if *feature >= self.schema.len() || *left >= self.nodes.len() || *right >= self.nodes.len() =>
                {
                    return Err(PlannerError::Persist("split references a missing node or feature".into()))
                }
                _ => {}
            }
        }
        for (label, plan) in &self.plan_table {
            plan.validate(&hosted).map_err(|reason| PlannerError::InvalidPlan { label: label.clone(), reason })?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), PlannerError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| PlannerError::Persist(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| PlannerError::Persist(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PlannerError> {
        let text = std::fs::read_to_string(path).map_err(|e| PlannerError::Persist(e.to_string()))?;
        let tree: DecisionTree = serde_json::from_str(&text).map_err(|e| PlannerError::Persist(e.to_string()))?;
        tree.validate(|_| true)?;
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(labels: &[&str]) -> BTreeMap<String, Plan> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let steps = (0..=i).map(|_| PlanStep::new("echo")).collect();
                (l.to_string(), Plan { steps, default_path: "human_handoff".into() })
            })
            .collect()
    }

    fn rec(x: Vec<f64>, label: &str) -> TraceRecord {
        TraceRecord { features: FeatureVector(x), best_plan_label: label.into(), outcome_score: 1.0 }
    }

    #[test]
    fn pure_data_gives_single_leaf() {
        let recs: Vec<_> = (0..10).map(|i| rec(vec![i as f64, 0.0], "a")).collect();
        let t = train_tree(&recs, FeatureSchema::generic(2), table(&["a"]), TreeParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_label(&FeatureVector(vec![99.0, 5.0])).unwrap(), "a");
    }

    #[test]
    fn one_dimensional_threshold() {
        let mut recs = Vec::new();
        for i in 0..50 {
            recs.push(rec(vec![i as f64 / 100.0], "l1"));
            recs.push(rec(vec![0.5 + i as f64 / 100.0], "l2"));
        }
        let t = train_tree(&recs, FeatureSchema::generic(1), table(&["l1", "l2"]), TreeParams { max_depth: 3, min_leaf: 1 }).unwrap();
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 0.49 && *threshold < 0.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert!(recs.iter().all(|r| t.predict_label(&r.features).unwrap() == r.best_plan_label));
        assert_eq!(t.predict_plan(&FeatureVector(vec![0.1])).unwrap(), &t.plan_table["l1"]);
    }

    #[test]
    fn majority_ties_prefer_smallest_label() {
        let recs = vec![rec(vec![1.0], "b"), rec(vec![1.0], "a")];
        let t = train_tree(&recs, FeatureSchema::generic(1), table(&["a", "b"]), TreeParams::default()).unwrap();
        assert_eq!(t.predict_label(&FeatureVector(vec![1.0])).unwrap(), "a");
    }

    #[test]
    fn errors() {
        let s = FeatureSchema::generic(1);
        assert_eq!(train_tree(&[], s.clone(), table(&["a"]), TreeParams::default()), Err(PlannerError::EmptyTraining));
        assert!(matches!(
            train_tree(&[rec(vec![1.0], "zzz")], s.clone(), table(&["a"]), TreeParams::default()),
            Err(PlannerError::UnknownLabel(_))
        ));
        let t = train_tree(&[rec(vec![1.0], "a")], s, table(&["a"]), TreeParams::default()).unwrap();
        assert!(matches!(t.predict_plan(&FeatureVector(vec![1.0, 2.0])), Err(PlannerError::SchemaMismatch { .. })));
    }

    #[test]
    fn best_label_tie_breaks() {
        let t = table(&["short", "long"]);
        let outcomes = vec![("long".to_string(), 0.9), ("short".to_string(), 0.9)];
        assert_eq!(best_plan_label(&outcomes, &t), Some("short"));
        let outcomes = vec![("long".to_string(), 0.95), ("short".to_string(), 0.9)];
        assert_eq!(best_plan_label(&outcomes, &t), Some("long"));
    }

    #[test]
    fn tree_json_round_trip() {
        let recs = vec![rec(vec![0.0], "a"), rec(vec![1.0], "b")];
        let t = train_tree(&recs, FeatureSchema::generic(1), table(&["a", "b"]), TreeParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tree.json");
        t.save(&p).unwrap();
        assert_eq!(DecisionTree::load(&p).unwrap(), t);
    }
}

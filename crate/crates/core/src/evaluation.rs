//! Router evaluation against labeled prompts.

use std::collections::BTreeSet;

use crate::embedding::Embedder;
use crate::exec::Exec;
use crate::metrics::{EvalReport, ReportBuilder};
use crate::orchestrator::{route_batch, LabeledPrompt, OrchestratorError, Registry, RoutingDecision};
use crate::ranker::RankerModel;

/// Gold agents of a prompt: its positive path without the separator.
pub fn gold_set(prompt: &LabeledPrompt, registry: &Registry) -> BTreeSet<String> {
    let sep = registry.separator().map(|s| s.agent_id.as_str());
    prompt.positive_path.iter().filter(|id| Some(id.as_str()) != sep).cloned().collect()
}

/// Depth of an agent in the hierarchy, 1 for roots.
fn level(registry: &Registry, id: &str) -> usize {
    registry.lineage(id).len()
}

/// Scores routing decisions against gold labels: micro-F1 over selected vs
/// gold agent sets, and per-level accuracy of the highest-ranked agent at
/// each hierarchy level that the gold path covers.
pub fn score_decisions(
    prompts: &[LabeledPrompt],
    decisions: &[RoutingDecision],
    registry: &Registry,
    fingerprint: &str,
) -> EvalReport {
    let mut b = ReportBuilder::default();
    for (p, d) in prompts.iter().zip(decisions) {
        let gold = gold_set(p, registry);
        let predicted: BTreeSet<String> = d.selected.iter().cloned().collect();
        b.add_decision(&predicted, &gold);
        for g in &gold {
            let lv = level(registry, g);
            let top_at_level = d
                .ranked
                .iter()
                .map(|(id, _)| id)
                .find(|id| *id != &d.separator_id && level(registry, id) == lv);
            b.add_level(lv, top_at_level == Some(g));
        }
    }
    b.finish(fingerprint)
}

pub fn eval_router(
    model: &RankerModel,
    registry: &Registry,
    embedder: &dyn Embedder,
    prompts: &[LabeledPrompt],
    exec: Exec,
) -> Result<EvalReport, OrchestratorError> {
    let texts: Vec<String> = prompts.iter().map(|p| p.text.clone()).collect();
    let decisions = route_batch(model, registry, embedder, &texts, exec)?;
    let fp = format!("model:v{}:{}|registry:r{}", model.version, model.trained_on, registry.revision());
    Ok(score_decisions(prompts, &decisions, registry, &fp))
}

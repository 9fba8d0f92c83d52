//! Agent registry, rated training-group construction, and separator-based
//! top-k routing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, Embedder, EmbeddingVector};
use crate::exec::Exec;
use crate::ranker::{RankError, RankerModel, RatedCandidate, RatedGroup};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestratorError {
    #[error("agent id {0} already registered")]
    DuplicateId(String),
    #[error("a separator agent ({0}) is already registered")]
    SecondSeparator(String),
    #[error("agent description is empty")]
    EmptyDescription,
    #[error("unknown agent id {0}")]
    UnknownAgentId(String),
    #[error("agent {0} still has children")]
    HasChildren(String),
    #[error("registry has no routable agents")]
    EmptyRegistry,
    #[error("registry has no separator agent")]
    NoSeparator,
    #[error("labeled prompt has an empty positive path")]
    EmptyPositivePath,
    #[error("embedding failed: {0}")]
    EmbeddingFailure(#[from] EmbedError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error("registry file: {0}")]
    Persist(String),
}

/// Where an agent's implementation lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    Builtin(String),
    Remote(String),
}

impl Default for Binding {
    fn default() -> Self {
        Binding::Builtin("echo".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub agent_id: String,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    #[serde(default)]
    pub is_separator: bool,
    #[serde(default)]
    pub binding: Binding,
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
}

impl AgentSpec {
    pub fn new(agent_id: impl Into<String>, name: impl Into<String>, description: impl Into<String>) -> Self {
        AgentSpec {
            agent_id: agent_id.into(),
            name: name.into(),
            description: description.into(),
            parent_id: None,
            is_separator: false,
            binding: Binding::default(),
            settings: BTreeMap::new(),
        }
    }

    pub fn with_parent(mut self, parent: impl Into<String>) -> Self {
        self.parent_id = Some(parent.into());
        self
    }

    /// Catch-all pseudo-agent, described as `other <domain> matters`.
    pub fn separator(agent_id: impl Into<String>, domain: &str) -> Self {
        let mut s = AgentSpec::new(agent_id, "Separator Class", format!("other {domain} matters"));
        s.is_separator = true;
        s
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct RegistryFile {
    revision: u64,
    agents: Vec<AgentSpec>,
}

/// Registered agents with their cached description embeddings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    agents: BTreeMap<String, AgentSpec>,
    embeddings: BTreeMap<String, EmbeddingVector>,
    revision: u64,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AgentSpec> {
        self.agents.get(id)
    }

    pub fn embedding(&self, id: &str) -> Option<&EmbeddingVector> {
        self.embeddings.get(id)
    }

    /// Agents in id order.
    pub fn agents(&self) -> impl Iterator<Item = &AgentSpec> {
        self.agents.values()
    }

    pub fn ids(&self) -> Vec<String> {
        self.agents.keys().cloned().collect()
    }

    pub fn separator(&self) -> Option<&AgentSpec> {
        self.agents.values().find(|a| a.is_separator)
    }

    /// Embeds the description and adds the agent. No model is touched.
    pub fn register_agent(&mut self, spec: AgentSpec, embedder: &dyn Embedder) -> Result<u64, OrchestratorError> {
        if spec.description.trim().is_empty() {
            return Err(OrchestratorError::EmptyDescription);
        }
        if self.agents.contains_key(&spec.agent_id) {
            return Err(OrchestratorError::DuplicateId(spec.agent_id));
        }
        if spec.is_separator {
            if let Some(existing) = self.separator() {
                return Err(OrchestratorError::SecondSeparator(existing.agent_id.clone()));
            }
        }
        // Parents must already exist, which keeps the hierarchy acyclic.
        if let Some(parent) = &spec.parent_id {
            if !self.agents.contains_key(parent) {
                return Err(OrchestratorError::UnknownAgentId(parent.clone()));
            }
        }
        let emb = embedder.embed(&spec.description)?;
        self.embeddings.insert(spec.agent_id.clone(), emb);
        self.agents.insert(spec.agent_id.clone(), spec);
        self.revision += 1;
        Ok(self.revision)
    }

    pub fn remove_agent(&mut self, id: &str) -> Result<AgentSpec, OrchestratorError> {
        if !self.agents.contains_key(id) {
            return Err(OrchestratorError::UnknownAgentId(id.to_string()));
        }
        if self.agents.values().any(|a| a.parent_id.as_deref() == Some(id)) {
            return Err(OrchestratorError::HasChildren(id.to_string()));
        }
        self.embeddings.remove(id);
        let spec = self.agents.remove(id).expect("checked above");
        self.revision += 1;
        Ok(spec)
    }

    /// `id` followed by its ancestors, nearest first.
    pub fn lineage(&self, id: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = Some(id.to_string());
        while let Some(c) = cur {
            if out.contains(&c) {
                break;
            }
            cur = self.agents.get(&c).and_then(|a| a.parent_id.clone());
            out.push(c);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFile { revision: self.revision, agents: self.agents.values().cloned().collect() };
        serde_json::to_string_pretty(&file).expect("registry serializes")
    }

    /// Rebuilds a registry from its JSON document, re-embedding descriptions.
    pub fn from_json(text: &str, embedder: &dyn Embedder) -> Result<Self, OrchestratorError> {
        let file: RegistryFile = serde_json::from_str(text).map_err(|e| OrchestratorError::Persist(e.to_string()))?;
        let mut reg = Registry::new();
        let mut pending = file.agents;
        // Parents first, whatever order the file lists them in.
        while !pending.is_empty() {
            let before = pending.len();
            let mut rest = Vec::new();
            for spec in pending {
                let ready = spec.parent_id.as_ref().is_none_or(|p| reg.agents.contains_key(p));
                if ready {
                    reg.register_agent(spec, embedder)?;
                } else {
                    rest.push(spec);
                }
            }
            if rest.len() == before {
                let id = rest[0].parent_id.clone().unwrap_or_default();
                return Err(OrchestratorError::UnknownAgentId(id));
            }
            pending = rest;
        }
        reg.revision = file.revision;
        Ok(reg)
    }

    pub fn save(&self, path: &Path) -> Result<(), OrchestratorError> {
        std::fs::write(path, self.to_json()).map_err(|e| OrchestratorError::Persist(e.to_string()))
    }

    pub fn load(path: &Path, embedder: &dyn Embedder) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::Persist(e.to_string()))?;
        Registry::from_json(&text, embedder)
    }
}

/// A training prompt labeled with its positive hierarchy path, deepest
/// level first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrompt {
    pub text: String,
    pub positive_path: Vec<String>,
    #[serde(default)]
    pub negatives: Vec<String>,
}

/// Graded relevance of every registered agent for one labeled prompt, in
/// registry order.
///
/// Specific intent (separator not on the path): path entries rate from
/// `len` down to 1 (deepest highest), separator 0, other agents sharing an
/// ancestor with the path −1, everything else −2.
///
/// Catch-all (separator on the path): path entries including the separator
/// rate from `len` down to 1, in-hierarchy non-path agents 0, everything
/// else −1.
pub fn rate_agents(prompt: &LabeledPrompt, registry: &Registry) -> Result<Vec<(String, i64)>, OrchestratorError> {
    if prompt.positive_path.is_empty() {
        return Err(OrchestratorError::EmptyPositivePath);
    }
    for id in prompt.positive_path.iter().chain(&prompt.negatives) {
        if registry.get(id).is_none() {
            return Err(OrchestratorError::UnknownAgentId(id.clone()));
        }
    }
    let sep_id = registry.separator().map(|s| s.agent_id.clone());
    let catch_all = sep_id.as_ref().is_some_and(|s| prompt.positive_path.contains(s));
    let len = prompt.positive_path.len() as i64;
    let path_rating: BTreeMap<&str, i64> =
        prompt.positive_path.iter().enumerate().map(|(i, id)| (id.as_str(), len - i as i64)).collect();
    let path_set: BTreeSet<&str> =
        prompt.positive_path.iter().map(String::as_str).filter(|id| Some(*id) != sep_id.as_deref()).collect();
    let negatives: BTreeSet<&str> = prompt.negatives.iter().map(String::as_str).collect();

    let (separator_rating, in_domain, out_of_domain) = if catch_all { (None, 0, -1) } else { (Some(0), -1, -2) };

    Ok(registry
        .agents()
        .map(|a| {
            let id = a.agent_id.as_str();
            let rating = if let Some(&r) = path_rating.get(id) {
                r
            } else if a.is_separator {
                separator_rating.unwrap_or(out_of_domain)
            } else if negatives.contains(id) {
                out_of_domain
            } else if registry.lineage(id).iter().any(|anc| path_set.contains(anc.as_str())) {
                in_domain
            } else {
                out_of_domain
            };
            (id.to_string(), rating)
        })
        .collect())
}

fn group_for(
    i: usize,
    prompt: &LabeledPrompt,
    prompt_embedding: EmbeddingVector,
    registry: &Registry,
) -> Result<RatedGroup, OrchestratorError> {
    let ratings = rate_agents(prompt, registry)?;
    let candidates = ratings
        .into_iter()
        .map(|(id, rating)| RatedCandidate {
            embedding: registry.embedding(&id).expect("registered agents are embedded").clone(),
            agent_id: id,
            rating,
        })
        .collect();
    Ok(RatedGroup { group_id: format!("g{i}"), prompt_embedding, candidates })
}

/// One rated group per prompt, candidates = every registered agent.
pub fn build_groups(
    prompts: &[LabeledPrompt],
    registry: &Registry,
    embedder: &dyn Embedder,
) -> Result<Vec<RatedGroup>, OrchestratorError> {
    let texts: Vec<String> = prompts.iter().map(|p| p.text.clone()).collect();
    let embs = embedder.embed_batch(&texts)?;
    prompts
        .iter()
        .zip(embs)
        .enumerate()
        .map(|(i, (p, e))| group_for(i, p, e, registry))
        .collect()
}

/// Like [`build_groups`], but prompts that reference agents no longer in the
/// registry are skipped with a warning. Returns the groups and the number
/// skipped.
pub fn build_groups_dropping_stale(
    prompts: &[LabeledPrompt],
    registry: &Registry,
    embedder: &dyn Embedder,
) -> Result<(Vec<RatedGroup>, usize), OrchestratorError> {
    let live: Vec<&LabeledPrompt> = prompts
        .iter()
        .filter(|p| p.positive_path.iter().chain(&p.negatives).all(|id| registry.get(id).is_some()))
        .collect();
    let dropped = prompts.len() - live.len();
    if dropped > 0 {
        log::warn!("dropping {dropped} labeled prompts that reference removed agents");
    }
    let owned: Vec<LabeledPrompt> = live.into_iter().cloned().collect();
    Ok((build_groups(&owned, registry, embedder)?, dropped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub ranked: Vec<(String, f64)>,
    /// Agents ranked strictly above the separator, in rank order.
    pub selected: Vec<String>,
    pub separator_id: String,
    pub model_version: u64,
    pub registry_revision: u64,
}

impl RoutingDecision {
    pub fn separator_top(&self) -> bool {
        self.ranked.first().is_some_and(|(id, _)| *id == self.separator_id)
    }

    pub fn top_agent(&self) -> Option<&str> {
        self.ranked.first().map(|(id, _)| id.as_str())
    }
}

/// Ranks all registered agents for an already-embedded prompt.
pub fn route_embedded(
    model: &RankerModel,
    registry: &Registry,
    prompt: &EmbeddingVector,
) -> Result<RoutingDecision, OrchestratorError> {
    let sep = registry.separator().ok_or(OrchestratorError::NoSeparator)?;
    if registry.agents().all(|a| a.is_separator) {
        return Err(OrchestratorError::EmptyRegistry);
    }
    let candidates: Vec<(&str, &EmbeddingVector)> = registry
        .agents()
        .map(|a| (a.agent_id.as_str(), registry.embedding(&a.agent_id).expect("registered agents are embedded")))
        .collect();
    let ranked = model.rank(prompt, &candidates)?;
    let selected = ranked.iter().take_while(|(id, _)| *id != sep.agent_id).map(|(id, _)| id.clone()).collect();
    Ok(RoutingDecision {
        ranked,
        selected,
        separator_id: sep.agent_id.clone(),
        model_version: model.version,
        registry_revision: registry.revision(),
    })
}

pub fn route(
    model: &RankerModel,
    registry: &Registry,
    embedder: &dyn Embedder,
    prompt_text: &str,
) -> Result<RoutingDecision, OrchestratorError> {
    if registry.agents().all(|a| a.is_separator) {
        return Err(OrchestratorError::EmptyRegistry);
    }
    let q = embedder.embed(prompt_text)?;
    route_embedded(model, registry, &q)
}

/// Routes many prompts; embedding is one batch call and ranking fans out
/// per `exec`.
pub fn route_batch(
    model: &RankerModel,
    registry: &Registry,
    embedder: &dyn Embedder,
    texts: &[String],
    exec: Exec,
) -> Result<Vec<RoutingDecision>, OrchestratorError> {
    let embs = embedder.embed_batch(texts)?;
    exec.try_map(&embs, |_, q| route_embedded(model, registry, q))
}

//! Loading and training the pieces a copilot is assembled from.

use std::path::Path;
use std::sync::Arc;

use orchestrator_core::config::AppConfig;
use orchestrator_core::dataset::ecommerce_spec;
use orchestrator_core::embedding::{build_embedder, Embedder};
use orchestrator_core::orchestrator::Registry;
use orchestrator_core::pipeline::{train_copilot, Copilot, CopilotTraining};
use orchestrator_core::planner::DecisionTree;
use orchestrator_core::ranker::RankerModel;
use orchestrator_core::runtime::{AgentHost, Catalog, Gazetteer};

use crate::error::CliError;

pub fn embedder(cfg: &AppConfig) -> Result<Arc<dyn Embedder>, CliError> {
    build_embedder(&cfg.embedding).map_err(|e| CliError::Usage(format!("embedding config: {e}")))
}

pub fn catalog(cfg: &AppConfig) -> Result<Arc<Catalog>, CliError> {
    match &cfg.catalog.path {
        Some(p) => Catalog::load(p).map(Arc::new).map_err(|e| CliError::Data(format!("catalog {}: {e}", p.display()))),
        None => Ok(Arc::new(Catalog::fixture())),
    }
}

pub fn gazetteer(cfg: &AppConfig, catalog: &Catalog) -> Result<Arc<Gazetteer>, CliError> {
    match &cfg.catalog.gazetteer_path {
        Some(p) => Gazetteer::load(p).map(Arc::new).map_err(|e| CliError::Data(format!("gazetteer {}: {e}", p.display()))),
        None => Ok(Arc::new(catalog.gazetteer())),
    }
}

pub fn load_registry(path: &Path, embedder: &dyn Embedder) -> Result<Registry, CliError> {
    Registry::load(path, embedder).map_err(|e| CliError::Data(format!("registry {}: {e}", path.display())))
}

pub fn load_model(path: &Path, embedder: &dyn Embedder) -> Result<RankerModel, CliError> {
    let model = RankerModel::load(path).map_err(|e| CliError::Data(format!("router model {}: {e}", path.display())))?;
    if model.dimension != embedder.dimension() {
        return Err(CliError::Data(format!(
            "router model has dimension {} but the embedder produces {}",
            model.dimension,
            embedder.dimension()
        )));
    }
    Ok(model)
}

/// Router, registry and planner from the configured artifact paths.
pub fn load_copilot(cfg: &AppConfig) -> Result<Copilot, CliError> {
    let embedder = embedder(cfg)?;
    let catalog = catalog(cfg)?;
    let gazetteer = gazetteer(cfg, &catalog)?;
    let registry = load_registry(&cfg.router.registry_path, embedder.as_ref())?;
    let model = load_model(&cfg.router.model_path, embedder.as_ref())?;
    let tree = DecisionTree::load(&cfg.planner.tree_path)
        .map_err(|e| CliError::Data(format!("planner {}: {e}", cfg.planner.tree_path.display())))?;
    let host = Arc::new(AgentHost::builtin(catalog));
    tree.validate(|id| host.contains(id)).map_err(CliError::data)?;
    Ok(Copilot { embedder, registry: Arc::new(registry), model: Arc::new(model), tree: Arc::new(tree), host, gazetteer })
}

/// A copilot trained in-process on synthetic e-commerce prompts.
pub fn demo_copilot(cfg: &AppConfig, seed: u64) -> Result<Copilot, CliError> {
    let embedder = embedder(cfg)?;
    let catalog = catalog(cfg)?;
    let gazetteer = gazetteer(cfg, &catalog)?;
    let host = Arc::new(AgentHost::builtin(catalog));
    let opts = CopilotTraining {
        router: cfg.router.train.clone(),
        tree: cfg.planner.params(),
        planner_prompts_per_class: cfg.planner.prompts_per_class,
        separator_domain: cfg.router.separator_domain.clone(),
        ..CopilotTraining::default()
    };
    train_copilot(&ecommerce_spec(60, seed, &[]), embedder, host, gazetteer, &opts).map_err(CliError::runtime)
}

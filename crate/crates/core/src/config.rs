//! Application configuration, read from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbedderConfig;
use crate::planner::TreeParams;
use crate::ranker::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterSection {
    pub train: TrainConfig,
    pub model_path: PathBuf,
    pub registry_path: PathBuf,
    pub separator_domain: String,
}

impl Default for RouterSection {
    fn default() -> Self {
        RouterSection {
            train: TrainConfig::default(),
            model_path: "artifacts/router.json".into(),
            registry_path: "artifacts/registry.json".into(),
            separator_domain: "microsoft store".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSection {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub tree_path: PathBuf,
    pub prompts_per_class: usize,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let t = TreeParams::default();
        PlannerSection { max_depth: t.max_depth, min_leaf: t.min_leaf, tree_path: "artifacts/planner.json".into(), prompts_per_class: 4 }
    }
}

impl PlannerSection {
    pub fn params(&self) -> TreeParams {
        TreeParams { max_depth: self.max_depth, min_leaf: self.min_leaf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSection {
    pub bind: String,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection { bind: "127.0.0.1:8080".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogSection {
    /// Catalog JSON; the bundled fixture when unset.
    pub path: Option<PathBuf>,
    /// Gazetteer file, one name per line; derived from the catalog when unset.
    pub gazetteer_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub embedding: EmbedderConfig,
    pub router: RouterSection,
    pub planner: PlannerSection,
    pub service: ServiceSection,
    pub catalog: CatalogSection,
}

impl AppConfig {
    /// Format by extension: `.json` is JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let parse_err = |message: String| ConfigError::Parse { path: path.into(), message };
        let cfg: AppConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.embedding.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.router.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.planner.max_depth == 0 || self.planner.min_leaf == 0 {
            return Err(ConfigError::Invalid("planner max_depth and min_leaf must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &toml_path,
            "[embedding]\ndimension = 64\n[router.train]\nepochs = 5\n[service]\nbind = \"0.0.0.0:9000\"\n",
        )
        .unwrap();
        let a = AppConfig::load(&toml_path).unwrap();
        assert_eq!(a.embedding.dimension, 64);
        assert_eq!(a.router.train.epochs, 5);
        assert_eq!(a.service.bind, "0.0.0.0:9000");
        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(AppConfig::load(&json_path).unwrap(), a);
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[embedding]\ndimension = 0\n").unwrap();
        assert!(matches!(AppConfig::load(&p), Err(ConfigError::Invalid(_))));
    }
}

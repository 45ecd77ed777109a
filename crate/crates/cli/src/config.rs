use std::path::{Path, PathBuf};

use anyhow::Context;
use react_cmg_core::augment::TokenBudget;
use react_cmg_core::corpus::FilterConfig;
use react_cmg_core::embed::EmbeddingEndpointConfig;
use react_cmg_core::generate::GeneratorConfig;
use react_cmg_core::retriever::{Bm25Params, HybridWeights, RetrievalOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    /// Base path; `.idx` and `.emb` are appended.
    pub index: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Local,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub provider: EmbedderKind,
    pub remote: EmbeddingEndpointConfig,
    pub workers: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self { provider: EmbedderKind::Local, remote: EmbeddingEndpointConfig::default(), workers: 4 }
    }
}

/// Settings shared by all commands. Command-line flags override these;
/// these override built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub paths: Paths,
    pub filter: FilterConfig,
    pub bm25: Bm25Params,
    pub hybrid_weights: HybridWeights,
    pub retrieval: RetrievalOptions,
    pub generator: GeneratorConfig,
    pub embedder: EmbedderConfig,
    pub budget: TokenBudget,
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! [graph]
//! triples = "data/triples.tsv"
//! descriptions = "data/descriptions.jsonl"
//!
//! [queries]
//! path = "data/queries.jsonl"
//! split = "test"            # optional
//!
//! [embedding]
//! provider = "hash"         # or "remote"
//! dim = 1024
//! url = "http://..."        # remote only; falls back to $TTG_EMBED_URL
//! cache = "cache.jsonl"     # optional, loaded when present
//!
//! [search]
//! method = "rmcts"          # random-walk | mcts | rmcts
//! iterations = 5000
//! max_depth = 3
//! uct_c = 1.4142135623730951
//! rollouts_per_expansion = 3
//! top_k = 1                 # defaults per method
//! seed = 7
//! reward_mode = "verbalize-then-embed"
//!
//! [llm]
//! client = "mock"           # or "remote"; key from $TTG_LLM_API_KEY
//! endpoint = "http://..."
//! prompt = "zero_shot"      # or "few_shot" with `exemplars`
//! cot = false
//!
//! [output]
//! retrieval = "out/retrieval.jsonl"
//! ```
//!
//! Relative paths in the file resolve against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use ttg_core::embed::RewardMode;
use ttg_core::eval::Split;
use ttg_core::prompt::PromptMode;
use ttg_core::retrieve::{Method, SearchParams};

pub const EMBED_URL_ENV: &str = "TTG_EMBED_URL";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphConfig,
    pub queries: QueriesConfig,
    pub embedding: EmbeddingConfig,
    pub search: SearchConfig,
    pub llm: LlmConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub triples: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueriesConfig {
    pub path: Option<PathBuf>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    pub dim: usize,
    pub url: Option<String>,
    pub timeout_secs: u64,
    pub cache: Option<PathBuf>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Hash,
            dim: 1024,
            url: None,
            timeout_secs: 30,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub method: Method,
    pub iterations: usize,
    pub max_depth: usize,
    pub uct_c: f64,
    pub rollouts_per_expansion: usize,
    pub top_k: Option<usize>,
    pub seed: Option<u64>,
    pub reward_mode: RewardMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let p = SearchParams::default();
        Self {
            method: Method::Rmcts,
            iterations: p.iterations,
            max_depth: p.max_depth,
            uct_c: p.uct_c,
            rollouts_per_expansion: p.rollouts_per_expansion,
            top_k: None,
            seed: None,
            reward_mode: p.reward_mode,
        }
    }
}

impl SearchConfig {
    /// Search parameters; fails when no seed was given.
    pub fn params(&self) -> Result<SearchParams> {
        let Some(seed) = self.seed else {
            bail!("a seed is required (set search.seed or pass --seed)");
        };
        let base = SearchParams::for_method(self.method);
        let params = SearchParams {
            iterations: self.iterations,
            max_depth: self.max_depth,
            uct_c: self.uct_c,
            rollouts_per_expansion: self.rollouts_per_expansion,
            seed,
            top_k: self.top_k.unwrap_or(base.top_k),
            reward_mode: self.reward_mode,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ClientChoice {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub client: ClientChoice,
    pub endpoint: Option<String>,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub prompt: PromptMode,
    pub cot: bool,
    /// JSON list of `{query, paths, answer}` for few-shot prompts.
    pub exemplars: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            client: ClientChoice::Mock,
            endpoint: None,
            max_tokens: 512,
            timeout_secs: 60,
            prompt: PromptMode::ZeroShot,
            cot: false,
            exemplars: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub retrieval: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config = Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.graph.triples);
        fix(&mut self.graph.descriptions);
        fix(&mut self.queries.path);
        fix(&mut self.embedding.cache);
        fix(&mut self.llm.exemplars);
        fix(&mut self.output.retrieval);
    }

    pub fn triples(&self) -> Result<&Path> {
        self.graph
            .triples
            .as_deref()
            .context("no triples file (set graph.triples or pass --triples)")
    }

    pub fn queries_path(&self) -> Result<&Path> {
        self.queries
            .path
            .as_deref()
            .context("no queries file (set queries.path or pass --queries)")
    }

    /// Fails early when a configured input file is missing.
    pub fn check_inputs(&self) -> Result<()> {
        let inputs = [
            &self.graph.triples,
            &self.graph.descriptions,
            &self.queries.path,
            &self.llm.exemplars,
        ];
        for path in inputs.into_iter().flatten() {
            if !path.is_file() {
                bail!("input file {} does not exist", path.display());
            }
        }
        Ok(())
    }
}

/// Flags shared by the commands that read a run configuration. Each one
/// overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub triples: Option<PathBuf>,
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Only use queries from this split.
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Remote embedding endpoint.
    #[arg(long)]
    pub embed_url: Option<String>,
    /// Embedding cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    /// Search iterations (walks for the random-walk baseline).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Maximum path length in hops.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub uct_c: Option<f64>,
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reward_mode: Option<RewardMode>,
    #[arg(long, value_enum)]
    pub llm: Option<ClientChoice>,
    #[arg(long)]
    pub llm_endpoint: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($dst:tt)+) => {
                if let Some(v) = &self.$flag {
                    c.$($dst)+ = v.clone().into();
                }
            };
        }
        set!(triples => graph.triples);
        set!(descriptions => graph.descriptions);
        set!(queries => queries.path);
        set!(split => queries.split);
        set!(provider => embedding.provider);
        set!(dim => embedding.dim);
        set!(embed_url => embedding.url);
        set!(cache => embedding.cache);
        set!(method => search.method);
        set!(iterations => search.iterations);
        set!(depth => search.max_depth);
        set!(uct_c => search.uct_c);
        set!(rollouts => search.rollouts_per_expansion);
        set!(top_k => search.top_k);
        set!(seed => search.seed);
        set!(reward_mode => search.reward_mode);
        set!(llm => llm.client);
        set!(llm_endpoint => llm.endpoint);
        Ok(c)
    }
}

//! Turning a [`RunConfig`] into loaded graphs, embedders and LLM clients.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use ttg_core::embed::{Embedder, EmbeddingCache, EmbeddingProvider, HashEmbedder, RemoteEmbedder, RemoteEmbedderConfig};
use ttg_core::eval::{read_queries, QueryRecord};
use ttg_core::prompt::{Exemplar, LlmClient, MockLlm, PromptMode, PromptTemplate, RemoteLlm, RemoteLlmConfig};
use ttg_core::tkg::{load_tkg, TextualKnowledgeGraph};

use crate::config::{ClientChoice, ProviderKind, RunConfig, EMBED_URL_ENV};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

/// Creates `path` (and its parent directory) for writing.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn load_graph(config: &RunConfig) -> Result<TextualKnowledgeGraph> {
    let triples = config.triples()?;
    let descriptions: Box<dyn BufRead> = match &config.graph.descriptions {
        Some(path) => Box::new(open(path)?),
        None => Box::new(std::io::empty()),
    };
    load_tkg(open(triples)?, descriptions).with_context(|| format!("loading graph {}", triples.display()))
}

pub fn load_queries(config: &RunConfig) -> Result<Vec<QueryRecord>> {
    let path = config.queries_path()?;
    let mut records = read_queries(open(path)?).with_context(|| format!("reading queries {}", path.display()))?;
    if let Some(split) = config.queries.split {
        records.retain(|r| r.split == split);
    }
    Ok(records)
}

pub fn provider(config: &RunConfig) -> Result<Arc<dyn EmbeddingProvider>> {
    let e = &config.embedding;
    Ok(match e.provider {
        ProviderKind::Hash => Arc::new(HashEmbedder::new(e.dim)?),
        ProviderKind::Remote => {
            let url = match &e.url {
                Some(url) => url.clone(),
                None => std::env::var(EMBED_URL_ENV)
                    .ok()
                    .filter(|u| !u.is_empty())
                    .with_context(|| format!("remote embedding needs embedding.url, --embed-url or ${EMBED_URL_ENV}"))?,
            };
            Arc::new(RemoteEmbedder::new(RemoteEmbedderConfig {
                url,
                dim: e.dim,
                timeout_secs: e.timeout_secs,
            })?)
        }
    })
}

/// The configured embedder, warm-started from the cache file when it exists.
pub fn embedder(config: &RunConfig) -> Result<Embedder> {
    let provider = provider(config)?;
    match &config.embedding.cache {
        Some(path) if path.is_file() => {
            let cache = EmbeddingCache::load(open(path)?).with_context(|| format!("loading cache {}", path.display()))?;
            log::info!("loaded {} cached embeddings from {}", cache.len(), path.display());
            Ok(Embedder::with_cache(provider, cache)?)
        }
        _ => Ok(Embedder::new(provider)),
    }
}

pub fn llm_client(config: &RunConfig) -> Result<Box<dyn LlmClient>> {
    let l = &config.llm;
    Ok(match l.client {
        ClientChoice::Mock => Box::new(MockLlm),
        ClientChoice::Remote => {
            let endpoint = l.endpoint.clone().context("remote LLM needs llm.endpoint or --llm-endpoint")?;
            Box::new(RemoteLlm::new(RemoteLlmConfig {
                endpoint,
                max_tokens: l.max_tokens,
                timeout_secs: l.timeout_secs,
            })?)
        }
    })
}

pub fn prompt_template(config: &RunConfig) -> Result<PromptTemplate> {
    let l = &config.llm;
    Ok(match l.prompt {
        PromptMode::ZeroShot => PromptTemplate::zero_shot(l.cot),
        PromptMode::FewShot => {
            let path = l.exemplars.as_deref().context("few-shot prompts need llm.exemplars")?;
            let exemplars: Vec<Exemplar> = serde_json::from_reader(open(path)?)
                .with_context(|| format!("parsing exemplars {}", path.display()))?;
            PromptTemplate::few_shot(exemplars, l.cot)?
        }
    })
}

/// Writes one JSON document per line.
pub fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?)
}

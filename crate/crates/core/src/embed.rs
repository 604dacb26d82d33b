//! Node and query embeddings, cosine similarity and the path reward used by
//! the tree searches.
//!
//! Two providers ship with the crate: [`HashEmbedder`], an offline hashed
//! bag-of-words model used by tests and synthetic benchmarks, and
//! [`RemoteEmbedder`], which talks to an HTTP JSON endpoint. Every lookup
//! goes through an [`EmbeddingCache`] keyed by provider name and input text.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hasher;
use std::io::{BufRead, Write};
use std::sync::Arc;
use std::time::Duration;

use fnv::FnvHasher;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tkg::{NodeId, TripleNode};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("embedding provider {provider} failed{}: {message}", node_suffix(.node_id))]
    Provider {
        provider: String,
        node_id: Option<NodeId>,
        message: String,
    },
    #[error("cache file: {0}")]
    CacheFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn node_suffix(node_id: &Option<NodeId>) -> String {
    node_id.map(|id| format!(" for node {id}")).unwrap_or_default()
}

/// A dense vector with finite components.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::Argument("embedding must have positive dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::Argument("embedding has non-finite components".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Embedding {
        Embedding(self.0.iter().map(|v| v * alpha).collect())
    }

    /// Component-wise arithmetic mean. Panics on an empty slice or mixed dims.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a Embedding>) -> Embedding {
        let mut iter = vectors.into_iter();
        let first = iter.next().expect("mean of no vectors");
        let mut acc = first.0.clone();
        let mut count = 1usize;
        for v in iter {
            assert_eq!(v.dim(), acc.len(), "dimension mismatch in mean");
            for (a, x) in acc.iter_mut().zip(&v.0) {
                *a += x;
            }
            count += 1;
        }
        for a in &mut acc {
            *a /= count as f64;
        }
        Embedding(acc)
    }
}

impl fmt::Debug for Embedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Embedding(dim={}, ", self.dim())?;
        f.debug_list().entries(self.0.iter().take(4)).finish()?;
        write!(f, "{})", if self.dim() > 4 { " ..." } else { "" })
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_similarity(u: &Embedding, v: &Embedding) -> Result<f64, EmbedError> {
    if u.dim() != v.dim() {
        return Err(EmbedError::Argument(format!(
            "dimension mismatch: {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Source of text embeddings. Implementations must be callable from many
/// threads at once.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn deterministic(&self) -> bool;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError>;
}

/// Trim, collapse internal whitespace, lowercase.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Lowercase alphanumeric runs of `text`.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Function words the hashed embedder ignores.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "by", "for", "from", "has", "have", "in", "is", "it", "its",
    "of", "on", "or", "that", "the", "then", "this", "through", "to", "was", "were", "which", "with",
];

/// Hashed bag-of-words: each non-stopword token lands in one of `dim`
/// buckets and the count vector is L2-normalized. Order-insensitive and
/// fully offline.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub const NAME: &'static str = "hash-bow";

    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::Argument("dim must be positive".into()));
        }
        Ok(Self { dim })
    }

    pub fn bucket(&self, token: &str) -> usize {
        let mut hasher = FnvHasher::default();
        hasher.write(token.as_bytes());
        (hasher.finish() % self.dim as u64) as usize
    }

    fn embed_one(&self, text: &str) -> Embedding {
        let mut counts = vec![0.0; self.dim];
        for token in tokens(&normalize_text(text)).filter(|t| !STOPWORDS.contains(&t.as_str())) {
            counts[self.bucket(&token)] += 1.0;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            for c in &mut counts {
                *c /= norm;
            }
        }
        Embedding(counts)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub url: String,
    pub dim: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Embeddings from an HTTP endpoint speaking
/// `{"texts": [...]}` → `{"vectors": [[...], ...]}`.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    name: String,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub const MAX_RETRIES: usize = 2;

    pub fn new(config: RemoteEmbedderConfig) -> Result<Self, EmbedError> {
        if config.dim == 0 {
            return Err(EmbedError::Argument("dim must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| EmbedError::Argument(format!("http client: {e}")))?;
        let name = format!("remote:{}", config.url);
        Ok(Self { config, name, client })
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, String> {
        let response = self
            .client
            .post(&self.config.url)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| e.to_string())?;
        if !response.status().is_success() {
            return Err(format!("HTTP {}", response.status()));
        }
        let body: EmbedResponse = response.json().map_err(|e| e.to_string())?;
        Ok(body.vectors)
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        let fail = |message: String| EmbedError::Provider {
            provider: self.name.clone(),
            node_id: None,
            message,
        };
        let mut last_error = String::new();
        for attempt in 0..=Self::MAX_RETRIES {
            match self.request(texts) {
                Ok(vectors) => {
                    if vectors.len() != texts.len() {
                        return Err(fail(format!(
                            "expected {} vectors, got {}",
                            texts.len(),
                            vectors.len()
                        )));
                    }
                    return vectors
                        .into_iter()
                        .map(|v| {
                            if v.len() != self.config.dim {
                                return Err(fail(format!(
                                    "expected dim {}, got {}",
                                    self.config.dim,
                                    v.len()
                                )));
                            }
                            Embedding::new(v).map_err(|e| fail(e.to_string()))
                        })
                        .collect();
                }
                Err(e) => {
                    log::warn!("embedding request attempt {} failed: {e}", attempt + 1);
                    last_error = e;
                }
            }
        }
        Err(fail(last_error))
    }
}

/// Cache key: hex SHA-256 prefix of `provider name \0 text`.
pub fn cache_key(provider_name: &str, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(provider_name.as_bytes());
    hasher.update([0u8]);
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

pub const CACHE_FORMAT: &str = "ttg-embedding-cache";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
    provider: String,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    dim: usize,
    values: Vec<f64>,
}

/// Thread-safe vector cache for one provider.
///
/// The on-disk form is JSON Lines: a header object
/// `{"format": "ttg-embedding-cache", "version": 1, "provider", "dim"}`
/// followed by one `{"key", "dim", "values"}` object per vector, sorted by key.
#[derive(Debug)]
pub struct EmbeddingCache {
    provider_name: String,
    dim: usize,
    entries: RwLock<HashMap<String, Arc<Embedding>>>,
}

impl EmbeddingCache {
    pub fn new(provider_name: impl Into<String>, dim: usize) -> Self {
        Self {
            provider_name: provider_name.into(),
            dim,
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn provider_name(&self) -> &str {
        &self.provider_name
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.read().is_empty()
    }

    pub fn get(&self, key: &str) -> Option<Arc<Embedding>> {
        self.entries.read().get(key).cloned()
    }

    pub fn insert(&self, key: String, vector: Embedding) -> Result<Arc<Embedding>, EmbedError> {
        if vector.dim() != self.dim {
            return Err(EmbedError::Argument(format!(
                "cache holds dim {}, got {}",
                self.dim,
                vector.dim()
            )));
        }
        let mut entries = self.entries.write();
        Ok(entries.entry(key).or_insert_with(|| Arc::new(vector)).clone())
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<(), EmbedError> {
        let header = CacheHeader {
            format: CACHE_FORMAT.into(),
            version: CACHE_VERSION,
            provider: self.provider_name.clone(),
            dim: self.dim,
        };
        writeln!(out, "{}", serde_json::to_string(&header).map_err(io_err)?)?;
        let entries = self.entries.read();
        let mut keys: Vec<&String> = entries.keys().collect();
        keys.sort();
        for key in keys {
            let entry = CacheEntry {
                key: key.clone(),
                dim: self.dim,
                values: entries[key].values().to_vec(),
            };
            writeln!(out, "{}", serde_json::to_string(&entry).map_err(io_err)?)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self, EmbedError> {
        let mut lines = input.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| EmbedError::CacheFormat("missing header".into()))??;
        let header: CacheHeader = serde_json::from_str(&header_line)
            .map_err(|e| EmbedError::CacheFormat(format!("bad header: {e}")))?;
        if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
            return Err(EmbedError::CacheFormat(format!(
                "unsupported cache {} v{}",
                header.format, header.version
            )));
        }
        let cache = Self::new(header.provider, header.dim);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CacheEntry = serde_json::from_str(&line)
                .map_err(|e| EmbedError::CacheFormat(format!("line {}: {e}", idx + 2)))?;
            if entry.dim != entry.values.len() {
                return Err(EmbedError::CacheFormat(format!(
                    "line {}: dim {} but {} values",
                    idx + 2,
                    entry.dim,
                    entry.values.len()
                )));
            }
            cache.insert(entry.key, Embedding::new(entry.values)?)?;
        }
        Ok(cache)
    }
}

fn io_err(e: serde_json::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// How a multi-node path is turned into one vector for the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// Embed the colon-joined serializations of the path's nodes.
    #[default]
    VerbalizeThenEmbed,
    /// Average the individual node vectors.
    MeanPool,
}

impl std::str::FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "verbalize-then-embed" | "verbalize" => Ok(Self::VerbalizeThenEmbed),
            "mean-pool" => Ok(Self::MeanPool),
            other => Err(format!("unknown reward mode {other:?}")),
        }
    }
}

/// Provider plus cache; the entry point for everything embedding-related.
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    cache: EmbeddingCache,
}

impl Embedder {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        let cache = EmbeddingCache::new(provider.name(), provider.dim());
        Self { provider, cache }
    }

    /// Reuses a previously saved cache. Fails if it belongs to another
    /// provider or dimension.
    pub fn with_cache(provider: Arc<dyn EmbeddingProvider>, cache: EmbeddingCache) -> Result<Self, EmbedError> {
        if cache.provider_name != provider.name() || cache.dim != provider.dim() {
            return Err(EmbedError::CacheFormat(format!(
                "cache is for {} (dim {}), provider is {} (dim {})",
                cache.provider_name,
                cache.dim,
                provider.name(),
                provider.dim()
            )));
        }
        Ok(Self { provider, cache })
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn dim(&self) -> usize {
        self.provider.dim()
    }

    pub fn embed_text(&self, text: &str) -> Result<Arc<Embedding>, EmbedError> {
        let key = cache_key(self.provider.name(), text);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let mut vectors = self.provider.embed_batch(&[text])?;
        let vector = vectors.pop().ok_or_else(|| EmbedError::Provider {
            provider: self.provider.name().to_string(),
            node_id: None,
            message: "empty response".into(),
        })?;
        self.cache.insert(key, vector)
    }

    /// Like [`Embedder::embed_text`] but never stores the result. Used for
    /// path texts, which are numerous and rarely repeat across searches.
    pub fn embed_transient(&self, text: &str) -> Result<Arc<Embedding>, EmbedError> {
        if let Some(hit) = self.cache.get(&cache_key(self.provider.name(), text)) {
            return Ok(hit);
        }
        let mut vectors = self.provider.embed_batch(&[text])?;
        vectors.pop().map(Arc::new).ok_or_else(|| EmbedError::Provider {
            provider: self.provider.name().to_string(),
            node_id: None,
            message: "empty response".into(),
        })
    }

    /// Embeds many texts, sending only cache misses to the provider.
    pub fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Arc<Embedding>>, EmbedError> {
        let keys: Vec<String> = texts.iter().map(|t| cache_key(self.provider.name(), t)).collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| self.cache.get(&keys[i]).is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            let vectors = self.provider.embed_batch(&batch)?;
            for (&i, vector) in missing.iter().zip(vectors) {
                self.cache.insert(keys[i].clone(), vector)?;
            }
        }
        Ok(keys.iter().map(|k| self.cache.get(k).expect("inserted above")).collect())
    }

    pub fn embed_node(&self, node: &TripleNode) -> Result<Arc<Embedding>, EmbedError> {
        self.embed_text(&node.serialized()).map_err(|e| match e {
            EmbedError::Provider { provider, message, .. } => EmbedError::Provider {
                provider,
                node_id: Some(node.node_id),
                message,
            },
            other => other,
        })
    }

    pub fn embed_query(&self, query: &str) -> Result<Arc<Embedding>, EmbedError> {
        if query.trim().is_empty() {
            return Err(EmbedError::Argument("query is empty".into()));
        }
        self.embed_text(query)
    }

    /// Similarity between the query and a whole path.
    pub fn path_reward(
        &self,
        query_vec: &Embedding,
        path: &[&TripleNode],
        mode: RewardMode,
    ) -> Result<f64, EmbedError> {
        if path.is_empty() {
            return Err(EmbedError::Argument("path is empty".into()));
        }
        match mode {
            RewardMode::VerbalizeThenEmbed => {
                let text = path.iter().map(|n| n.serialized()).collect::<Vec<_>>().join(" : ");
                let vector = self.embed_transient(&text)?;
                cosine_similarity(query_vec, &vector)
            }
            RewardMode::MeanPool => {
                let vectors = path
                    .iter()
                    .map(|n| self.embed_node(n))
                    .collect::<Result<Vec<_>, _>>()?;
                let mean = Embedding::mean(vectors.iter().map(Arc::as_ref));
                cosine_similarity(query_vec, &mean)
            }
        }
    }
}

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ttg_core::tkg::build_ttg;

use crate::config::ConfigArgs;
use crate::runtime::{create, embedder, load_graph, load_queries};

const BATCH: usize = 256;

#[derive(Debug, Args)]
pub struct EmbedCacheArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Cache file to write (defaults to embedding.cache).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Embeds every triple node, plus the queries when a queries file is
/// configured, and saves the cache.
pub fn run(args: &EmbedCacheArgs) -> Result<()> {
    let config = args.config.resolve()?;
    config.check_inputs()?;
    let out = args
        .out
        .clone()
        .or_else(|| config.embedding.cache.clone())
        .context("no cache file (pass --out or set embedding.cache)")?;

    let ttg = build_ttg(&load_graph(&config)?);
    let embedder = embedder(&config)?;
    let before = embedder.cache().len();

    let mut texts: Vec<String> = ttg.nodes().iter().map(|n| n.serialized()).collect();
    if config.queries.path.is_some() {
        texts.extend(load_queries(&config)?.into_iter().map(|q| q.query));
    }
    for chunk in texts.chunks(BATCH) {
        let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
        embedder.embed_texts(&refs)?;
    }

    let mut file = create(&out)?;
    embedder.cache().save(&mut file)?;
    std::io::Write::flush(&mut file)?;
    eprintln!(
        "cached {} embeddings ({} new) to {}",
        embedder.cache().len(),
        embedder.cache().len() - before,
        out.display()
    );
    Ok(())
}

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde_json::json;
use ttg_core::tkg::{build_ttg, validate};

use crate::config::ConfigArgs;
use crate::runtime::{create, load_graph};

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Also write the summary as JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

/// Loads the graph, builds the triple graph and reports its size.
pub fn run(args: &BuildArgs) -> Result<()> {
    let config = args.config.resolve()?;
    config.check_inputs()?;
    let tkg = load_graph(&config)?;
    let report = validate(&tkg);
    let ttg = build_ttg(&tkg);

    println!("nodes: {}, edges: {}", ttg.len(), ttg.edge_count());
    println!(
        "entities: {}, relations: {}, document coverage: {:.4}",
        report.entity_count, report.relation_vocabulary_size, report.coverage
    );
    if !report.dangling_document_keys.is_empty() {
        log::warn!(
            "{} documents name entities that appear in no triple",
            report.dangling_document_keys.len()
        );
    }
    if let Some(path) = &args.summary {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &json!({
            "nodes": ttg.len(),
            "edges": ttg.edge_count(),
            "validation": report,
        }))?;
        std::io::Write::write_all(&mut out, b"\n")?;
    }
    Ok(())
}

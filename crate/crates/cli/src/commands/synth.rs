use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use ttg_core::eval::write_queries;
use ttg_core::retrieve::RetrievedPath;
use ttg_core::synthgen::{
    default_templates, load_template_bank, plant_corpus, synth_queries, PlantedQuery, TopologicalStructure,
};
use ttg_core::tkg::TextualKnowledgeGraph;

use crate::config::{ClientChoice, ConfigArgs};
use crate::runtime::{create, llm_client, load_graph, write_jsonl};

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub mode: SynthMode,
}

#[derive(Debug, Subcommand)]
pub enum SynthMode {
    /// Generate a graph of planted queries with known gold paths.
    Planted(PlantedArgs),
    /// Sample template-based queries over an existing graph.
    Templated(Box<TemplatedArgs>),
}

#[derive(Debug, Args)]
pub struct PlantedArgs {
    /// Number of queries.
    #[arg(long, short)]
    pub n: usize,
    /// Structures to cycle through (comma separated); all six by default.
    #[arg(long, value_delimiter = ',')]
    pub structures: Vec<TopologicalStructure>,
    /// Decoy triples per query.
    #[arg(long, default_value_t = 50)]
    pub distractors: usize,
    #[arg(long)]
    pub seed: u64,
    /// Receives triples.tsv, descriptions.jsonl, queries.jsonl and gold_paths.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TemplatedArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Template bank (JSON); the built-in bank when omitted.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, short)]
    pub n: usize,
    /// Queries file to write.
    #[arg(long)]
    pub out: PathBuf,
}

/// One line of `gold_paths.jsonl`.
#[derive(Debug, Serialize)]
struct GoldPathRecord<'a> {
    id: &'a str,
    structure: TopologicalStructure,
    keyword: &'a str,
    path: &'a RetrievedPath,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    match &args.mode {
        SynthMode::Planted(a) => planted(a),
        SynthMode::Templated(a) => templated(a),
    }
}

pub fn write_graph(tkg: &TextualKnowledgeGraph, dir: &Path) -> Result<()> {
    let mut triples = create(&dir.join("triples.tsv"))?;
    tkg.write_triples(&mut triples)?;
    triples.flush()?;
    let mut docs = create(&dir.join("descriptions.jsonl"))?;
    tkg.write_descriptions(&mut docs)?;
    docs.flush()?;
    Ok(())
}

fn planted(args: &PlantedArgs) -> Result<()> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let shapes = if args.structures.is_empty() {
        TopologicalStructure::ALL.to_vec()
    } else {
        args.structures.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (tkg, planted) = plant_corpus(args.n, &shapes, args.distractors, &mut rng)?;

    write_graph(&tkg, &args.out_dir)?;
    let records: Vec<_> = planted.iter().map(|p| p.record.clone()).collect();
    let mut queries = create(&args.out_dir.join("queries.jsonl"))?;
    write_queries(&records, &mut queries)?;
    queries.flush()?;
    let gold: Vec<GoldPathRecord> = planted.iter().map(gold_record).collect();
    write_jsonl(&args.out_dir.join("gold_paths.jsonl"), &gold)?;

    eprintln!(
        "planted {} queries over {} triples in {}",
        records.len(),
        tkg.triples.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn gold_record(p: &PlantedQuery) -> GoldPathRecord<'_> {
    GoldPathRecord {
        id: &p.record.id,
        structure: p.template.structure,
        keyword: &p.keyword,
        path: &p.gold_path,
    }
}

fn templated(args: &TemplatedArgs) -> Result<()> {
    let config = args.config.resolve()?;
    config.check_inputs()?;
    let Some(seed) = config.search.seed else {
        bail!("a seed is required (pass --seed)");
    };
    let tkg = load_graph(&config)?;
    let templates = match &args.templates {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            load_template_bank(&text)?
        }
        None => default_templates(),
    };
    let client = match config.llm.client {
        ClientChoice::Mock => None,
        ClientChoice::Remote => Some(llm_client(&config)?),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = synth_queries(&tkg, &templates, args.n, client.as_deref(), &mut rng)?;
    if records.len() < args.n {
        log::warn!("only {} of {} requested queries survived filtering", records.len(), args.n);
    }
    let mut out = create(&args.out)?;
    write_queries(&records, &mut out)?;
    out.flush()?;
    eprintln!("wrote {} queries to {}", records.len(), args.out.display());
    Ok(())
}

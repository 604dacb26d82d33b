use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ttg_core::embed::Embedder;
use ttg_core::eval::QueryRecord;
use ttg_core::prompt::{build_prompt, generate_answers, LlmClient, PromptTemplate};
use ttg_core::retrieve::{retrieve, Method, RetrievedPath, SearchParams, Trajectory};
use ttg_core::tkg::{build_ttg, TextualTripleGraph};

use crate::config::ConfigArgs;
use crate::runtime::{embedder, llm_client, load_graph, load_queries, prompt_template, thread_pool, write_jsonl};

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output file (defaults to output.retrieval).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Parallel query workers.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

/// One output line per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub id: String,
    pub method: Method,
    pub params: SearchParams,
    pub trajectories: Vec<TrajectoryRecord>,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Chain triples as `[head, relation, tail]`, topic side first.
    pub nodes: Vec<[String; 3]>,
    /// Constraint triples with the 1-based hop they hang off.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<(usize, [String; 3])>,
    pub score: f64,
    pub hops: usize,
    pub stopped_early: bool,
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(t: &Trajectory) -> Self {
        let triple = |tr: &ttg_core::tkg::Triple| [tr.head.clone(), tr.relation.clone(), tr.tail.clone()];
        Self {
            nodes: t.path.chain.iter().map(|n| triple(&n.triple)).collect(),
            branches: t.path.branches.iter().map(|b| (b.depth, triple(&b.node.triple))).collect(),
            score: t.path.score,
            hops: t.path.hop_count,
            stopped_early: t.stopped_early,
        }
    }
}

/// Everything one retrieval pass needs, shared by all workers.
pub struct Pipeline<'a> {
    pub ttg: &'a TextualTripleGraph,
    pub embedder: &'a Embedder,
    pub client: &'a dyn LlmClient,
    pub template: &'a PromptTemplate,
    pub method: Method,
    pub params: SearchParams,
}

impl Pipeline<'_> {
    pub fn answer(&self, query: &QueryRecord) -> RetrievalRecord {
        let mut record = RetrievalRecord {
            id: query.id.clone(),
            method: self.method,
            params: self.params.clone(),
            trajectories: Vec::new(),
            answers: Vec::new(),
            warning: None,
            error: None,
        };
        let trajectories = match retrieve(
            self.method,
            self.ttg,
            &query.topic_entity,
            &query.query,
            self.embedder,
            &self.params,
        ) {
            Ok(t) => t,
            Err(e) => {
                record.error = Some(e.to_string());
                return record;
            }
        };
        let paths: Vec<RetrievedPath> = trajectories.iter().map(|t| t.path.clone()).collect();
        let prompt = build_prompt(&query.query, &paths, self.template);
        match generate_answers(self.client, &prompt, &paths) {
            Ok(generation) => {
                record.answers = generation.answers;
                record.warning = generation.warning;
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        record.trajectories = trajectories.iter().map(TrajectoryRecord::from).collect();
        record
    }

    /// Answers every query; output order follows `queries` whatever the
    /// worker count.
    pub fn run(&self, queries: &[QueryRecord], workers: usize) -> Result<Vec<RetrievalRecord>> {
        if workers <= 1 {
            return Ok(queries.iter().map(|q| self.answer(q)).collect());
        }
        let pool = thread_pool(workers)?;
        Ok(pool.install(|| queries.par_iter().map(|q| self.answer(q)).collect()))
    }
}

/// Logs per-query problems and fails when any query errored.
pub fn report_failures(records: &[RetrievalRecord]) -> Result<()> {
    let mut failed = 0;
    for r in records {
        if let Some(w) = &r.warning {
            log::warn!("{}: {w}", r.id);
        }
        if let Some(e) = &r.error {
            log::error!("{}: {e}", r.id);
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} of {} queries failed", records.len());
    }
    Ok(())
}

pub fn run(args: &RetrieveArgs) -> Result<()> {
    let config = args.config.resolve()?;
    config.check_inputs()?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output.retrieval.clone())
        .context("no output file (pass --out or set output.retrieval)")?;
    let params = config.search.params()?;
    let ttg = build_ttg(&load_graph(&config)?);
    let queries = load_queries(&config)?;
    let embedder = embedder(&config)?;
    let client = llm_client(&config)?;
    let template = prompt_template(&config)?;

    let pipeline = Pipeline {
        ttg: &ttg,
        embedder: &embedder,
        client: client.as_ref(),
        template: &template,
        method: config.search.method,
        params,
    };
    let records = pipeline.run(&queries, args.workers)?;
    write_jsonl(&out, &records)?;
    eprintln!("wrote {} retrieval records to {}", records.len(), out.display());
    report_failures(&records)
}

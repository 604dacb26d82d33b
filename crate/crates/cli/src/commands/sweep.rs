use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;
use ttg_core::eval::evaluate_run;
use ttg_core::retrieve::{Method, SearchParams};
use ttg_core::tkg::build_ttg;

use super::retrieve::{report_failures, Pipeline};
use crate::config::ConfigArgs;
use crate::runtime::{create, embedder, llm_client, load_graph, load_queries, prompt_template, write_jsonl};

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Iteration budgets to try (comma separated).
    #[arg(long = "grid-iterations", value_delimiter = ',')]
    pub grid_iterations: Vec<usize>,
    /// Depth limits to try (comma separated).
    #[arg(long = "grid-depths", value_delimiter = ',')]
    pub grid_depths: Vec<usize>,
    /// Methods to try; the configured method when omitted.
    #[arg(long = "grid-methods", value_delimiter = ',')]
    pub grid_methods: Vec<Method>,
    /// Receives sweep.csv, sweep.json and one retrieval file per setting.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub iterations: usize,
    pub depth: usize,
    pub queries: usize,
    pub em_f1: f64,
    pub rouge1_f1: f64,
    /// Share of queries whose predicted answer set equals the gold set.
    pub solved: f64,
}

fn table(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:<12} {:>10} {:>5} {:>7} {:>8} {:>10} {:>8}\n",
        "method", "iterations", "depth", "queries", "EM F1", "ROUGE-1 F1", "solved"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>10} {:>5} {:>7} {:>8.4} {:>10.4} {:>8.4}",
            r.method.as_str(),
            r.iterations,
            r.depth,
            r.queries,
            r.em_f1,
            r.rouge1_f1,
            r.solved
        );
    }
    out
}

fn csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,iterations,depth,queries,em_f1,rouge1_f1,solved\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method, r.iterations, r.depth, r.queries, r.em_f1, r.rouge1_f1, r.solved
        );
    }
    out
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let config = args.config.resolve()?;
    config.check_inputs()?;
    let base = config.search.params()?;
    let iterations = if args.grid_iterations.is_empty() { vec![base.iterations] } else { args.grid_iterations.clone() };
    let depths = if args.grid_depths.is_empty() { vec![base.max_depth] } else { args.grid_depths.clone() };
    let methods = if args.grid_methods.is_empty() { vec![config.search.method] } else { args.grid_methods.clone() };
    if iterations.contains(&0) || depths.contains(&0) {
        bail!("grid values must be positive");
    }

    let ttg = build_ttg(&load_graph(&config)?);
    let queries = load_queries(&config)?;
    let embedder = embedder(&config)?;
    let client = llm_client(&config)?;
    let template = prompt_template(&config)?;

    let mut rows = Vec::new();
    for &method in &methods {
        for &depth in &depths {
            for &iters in &iterations {
                let params = SearchParams {
                    iterations: iters,
                    max_depth: depth,
                    top_k: config.search.top_k.unwrap_or(SearchParams::for_method(method).top_k),
                    ..base.clone()
                };
                let pipeline = Pipeline {
                    ttg: &ttg,
                    embedder: &embedder,
                    client: client.as_ref(),
                    template: &template,
                    method,
                    params,
                };
                let records = pipeline.run(&queries, args.workers)?;
                report_failures(&records)?;
                write_jsonl(&args.out_dir.join(format!("{method}-e{iters}-d{depth}.jsonl")), &records)?;

                let predictions: BTreeMap<String, Vec<String>> =
                    records.into_iter().map(|r| (r.id, r.answers)).collect();
                let report = evaluate_run(&predictions, &queries, None)?;
                let solved = report.rows.iter().filter(|r| r.em.f1 == 1.0).count();
                rows.push(SweepRow {
                    method,
                    iterations: iters,
                    depth,
                    queries: report.rows.len(),
                    em_f1: report.macro_em.f1,
                    rouge1_f1: report.macro_rouge1.f1,
                    solved: solved as f64 / report.rows.len().max(1) as f64,
                });
                log::info!("{method} e={iters} d={depth}: EM F1 {:.4}", report.macro_em.f1);
            }
        }
    }

    print!("{}", table(&rows));
    let mut out = create(&args.out_dir.join("sweep.csv"))?;
    out.write_all(csv(&rows).as_bytes())?;
    out.flush()?;
    let mut out = create(&args.out_dir.join("sweep.json"))?;
    serde_json::to_writer_pretty(&mut out, &rows)?;
    out.write_all(b"\n")?;
    Ok(())
}

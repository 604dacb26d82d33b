use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use ttg_core::eval::{evaluate_run, read_queries, EvalReport, Split};

use crate::runtime::{create, open};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Queries with gold answers.
    #[arg(long)]
    pub queries: PathBuf,
    /// JSON Lines with `id` and `answers`, e.g. the output of `retrieve`.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub split: Option<Split>,
    /// Print CSV instead of the table.
    #[arg(long)]
    pub csv: bool,
    /// Write the full report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Deserialize)]
struct Prediction {
    id: String,
    #[serde(default)]
    answers: Vec<String>,
    #[serde(default)]
    method: Option<String>,
    #[serde(default)]
    params: Option<serde_json::Value>,
}

pub struct Predictions {
    pub answers: BTreeMap<String, Vec<String>>,
    pub method: Option<String>,
    pub params: Option<serde_json::Value>,
}

pub fn read_predictions(path: &Path) -> Result<Predictions> {
    let mut out = Predictions { answers: BTreeMap::new(), method: None, params: None };
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: bad prediction", path.display(), i + 1))?;
        if out.answers.insert(p.id.clone(), p.answers).is_some() {
            bail!("{}:{}: duplicate prediction id {:?}", path.display(), i + 1, p.id);
        }
        out.method = out.method.or(p.method);
        out.params = out.params.or(p.params);
    }
    Ok(out)
}

pub fn evaluate_files(queries: &Path, predictions: &Path, split: Option<Split>) -> Result<EvalReport> {
    let records = read_queries(open(queries)?).with_context(|| format!("reading {}", queries.display()))?;
    let predicted = read_predictions(predictions)?;
    let report = evaluate_run(&predicted.answers, &records, split)?;
    Ok(report.with_method(
        predicted.method.unwrap_or_default(),
        predicted.params.unwrap_or(serde_json::Value::Null),
    ))
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let report = evaluate_files(&args.queries, &args.predictions, args.split)?;
    for id in &report.missing_predictions {
        log::warn!("no prediction for {id}; scored as empty");
    }
    if args.csv {
        print!("{}", report.to_csv());
    } else {
        print!("{}", report.to_table());
    }
    if let Some(path) = &args.report {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &report)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

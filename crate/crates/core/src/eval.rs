//! Exact Match and ROUGE-1 scoring of predicted answer lists.
//!
//! Both metrics report precision, recall and F1 per query. EM works on sets
//! of normalized answers. ROUGE-1 aligns each prediction with at most one
//! gold answer (greedily, best unigram F1 first) and averages the per-pair
//! scores, so an unmatched prediction costs precision and an unmatched gold
//! answer costs recall.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("duplicate query id {0:?}")]
    DuplicateId(String),
    #[error("queries line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("query {0:?} has no gold answers")]
    EmptyGold(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One line of the queries file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub query: String,
    pub topic_entity: String,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    pub structure: String,
    pub split: Split,
}

/// At most this many gold answers per query.
pub const MAX_GOLD_ANSWERS: usize = 3;

pub fn read_queries<R: BufRead>(input: R) -> Result<Vec<QueryRecord>, EvalError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QueryRecord = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if record.gold_answers.is_empty() {
            return Err(EvalError::EmptyGold(record.id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_queries<W: Write>(records: &[QueryRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

/// Lowercase, punctuation to spaces, collapsed whitespace.
pub fn normalize_answer(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn answer_set<S: AsRef<str>>(answers: &[S]) -> BTreeSet<String> {
    answers
        .iter()
        .map(|a| normalize_answer(a.as_ref()))
        .filter(|a| !a.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    overlap: f64,
    predicted: f64,
    gold: f64,
}

fn em_counts<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> (Prf, Counts) {
    let pred = answer_set(predicted);
    let gold = answer_set(gold);
    let hit = pred.intersection(&gold).count() as f64;
    let p = if pred.is_empty() { 0.0 } else { hit / pred.len() as f64 };
    let r = if gold.is_empty() { 0.0 } else { hit / gold.len() as f64 };
    (
        Prf::new(p, r),
        Counts {
            overlap: hit,
            predicted: pred.len() as f64,
            gold: gold.len() as f64,
        },
    )
}

/// Set-level exact match over normalized answers.
pub fn em_prf<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> Prf {
    em_counts(predicted, gold).0
}

fn unigram_counts(text: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for tok in normalize_answer(text).split_whitespace() {
        *counts.entry(tok.to_string()).or_insert(0) += 1;
    }
    counts
}

fn multiset_overlap(a: &HashMap<String, usize>, b: &HashMap<String, usize>) -> usize {
    a.iter().map(|(t, &n)| n.min(b.get(t).copied().unwrap_or(0))).sum()
}

fn rouge_counts<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> (Prf, Counts) {
    let preds: Vec<_> = predicted
        .iter()
        .map(|p| unigram_counts(p.as_ref()))
        .filter(|c| !c.is_empty())
        .collect();
    let golds: Vec<_> = gold
        .iter()
        .map(|g| unigram_counts(g.as_ref()))
        .filter(|c| !c.is_empty())
        .collect();
    let len = |c: &HashMap<String, usize>| c.values().sum::<usize>() as f64;

    // (f1, p, r, pred idx, gold idx, overlap) for every overlapping pair
    let mut pairs = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in golds.iter().enumerate() {
            let overlap = multiset_overlap(p, g) as f64;
            if overlap > 0.0 {
                let (pp, rr) = (overlap / len(p), overlap / len(g));
                pairs.push((harmonic(pp, rr), pp, rr, i, j, overlap));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.3.cmp(&b.3)).then(a.4.cmp(&b.4)));

    let mut used_pred = vec![false; preds.len()];
    let mut used_gold = vec![false; golds.len()];
    let (mut p_sum, mut r_sum, mut overlap_sum) = (0.0, 0.0, 0.0);
    for (_, pp, rr, i, j, overlap) in pairs {
        if used_pred[i] || used_gold[j] {
            continue;
        }
        used_pred[i] = true;
        used_gold[j] = true;
        p_sum += pp;
        r_sum += rr;
        overlap_sum += overlap;
    }
    let p = if preds.is_empty() { 0.0 } else { p_sum / preds.len() as f64 };
    let r = if golds.is_empty() { 0.0 } else { r_sum / golds.len() as f64 };
    (
        Prf::new(p, r),
        Counts {
            overlap: overlap_sum,
            predicted: preds.iter().map(len).sum(),
            gold: golds.iter().map(len).sum(),
        },
    )
}

/// ROUGE-1 between answer lists with greedy one-to-one alignment.
pub fn rouge1_prf<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> Prf {
    rouge_counts(predicted, gold).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub structure: String,
    pub em: Prf,
    pub rouge1: Prf,
    pub missing_prediction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub params: serde_json::Value,
    pub split: Option<Split>,
    pub rows: Vec<EvalRow>,
    /// Mean of the per-query scores.
    pub macro_em: Prf,
    pub macro_rouge1: Prf,
    /// Pooled counts across all queries.
    pub micro_em: Prf,
    pub micro_rouge1: Prf,
    pub missing_predictions: Vec<String>,
}

fn mean_prf(rows: &[&Prf]) -> Prf {
    if rows.is_empty() {
        return Prf::default();
    }
    let n = rows.len() as f64;
    Prf {
        precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
    }
}

fn micro(total: Counts) -> Prf {
    let p = if total.predicted > 0.0 { total.overlap / total.predicted } else { 0.0 };
    let r = if total.gold > 0.0 { total.overlap / total.gold } else { 0.0 };
    Prf::new(p, r)
}

/// Scores `predictions` against `records`, optionally restricted to one
/// split. A record without a prediction is scored as an empty answer list.
pub fn evaluate_run(
    predictions: &BTreeMap<String, Vec<String>>,
    records: &[QueryRecord],
    filter: Option<Split>,
) -> Result<EvalReport, EvalError> {
    let mut ids = BTreeSet::new();
    for r in records {
        if !ids.insert(r.id.as_str()) {
            return Err(EvalError::DuplicateId(r.id.clone()));
        }
    }

    let mut rows = Vec::new();
    let mut missing = Vec::new();
    let mut em_total = Counts::default();
    let mut rouge_total = Counts::default();
    for record in records.iter().filter(|r| filter.is_none_or(|s| r.split == s)) {
        let empty = Vec::new();
        let pred = match predictions.get(&record.id) {
            Some(p) => p,
            None => {
                missing.push(record.id.clone());
                &empty
            }
        };
        let (em, em_c) = em_counts(pred, &record.gold_answers);
        let (rouge, rouge_c) = rouge_counts(pred, &record.gold_answers);
        for (total, c) in [(&mut em_total, em_c), (&mut rouge_total, rouge_c)] {
            total.overlap += c.overlap;
            total.predicted += c.predicted;
            total.gold += c.gold;
        }
        rows.push(EvalRow {
            id: record.id.clone(),
            structure: record.structure.clone(),
            em,
            rouge1: rouge,
            missing_prediction: !predictions.contains_key(&record.id),
        });
    }

    Ok(EvalReport {
        method: String::new(),
        params: serde_json::Value::Null,
        split: filter,
        macro_em: mean_prf(&rows.iter().map(|r| &r.em).collect::<Vec<_>>()),
        macro_rouge1: mean_prf(&rows.iter().map(|r| &r.rouge1).collect::<Vec<_>>()),
        micro_em: micro(em_total),
        micro_rouge1: micro(rouge_total),
        rows,
        missing_predictions: missing,
    })
}

impl EvalReport {
    pub fn with_method(mut self, method: impl Into<String>, params: serde_json::Value) -> Self {
        self.method = method.into();
        self.params = params;
        self
    }

    /// Percentages laid out like a results table: one line per averaging.
    pub fn to_table(&self) -> String {
        let pct = |x: f64| format!("{:>6.2}", 100.0 * x);
        let mut out = String::new();
        out.push_str(&format!(
            "method: {}  queries: {}  split: {}\n",
            if self.method.is_empty() { "-" } else { &self.method },
            self.rows.len(),
            self.split.map(|s| s.to_string()).unwrap_or_else(|| "all".into())
        ));
        out.push_str("          |   EM-P |   EM-R |  EM-F1 |   R1-P |   R1-R |  R1-F1\n");
        for (name, em, r1) in [
            ("macro", &self.macro_em, &self.macro_rouge1),
            ("micro", &self.micro_em, &self.micro_rouge1),
        ] {
            out.push_str(&format!(
                "{:<9} | {} | {} | {} | {} | {} | {}\n",
                name,
                pct(em.precision),
                pct(em.recall),
                pct(em.f1),
                pct(r1.precision),
                pct(r1.recall),
                pct(r1.f1)
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,structure,em_p,em_r,em_f1,rouge1_p,rouge1_r,rouge1_f1,missing\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                csv_field(&r.id),
                csv_field(&r.structure),
                r.em.precision,
                r.em.recall,
                r.em.f1,
                r.rouge1.precision,
                r.rouge1.recall,
                r.rouge1.f1,
                r.missing_prediction
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

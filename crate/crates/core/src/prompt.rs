//! Path verbalization, prompt assembly and answer generation.
//!
//! Paths are rendered with a small line grammar,
//!
//! ```text
//! h1 --r1--> t1 [b1 --rb--> c1] ; t1 --r2--> t2
//! ```
//!
//! one segment per hop separated by ` ; `, with a constraint branch in
//! brackets right after the hop it belongs to. [`parse_verbalized`] reads
//! the grammar back.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieve::RetrievedPath;
use crate::tkg::Triple;

pub const DEFAULT_INSTRUCTION: &str = include_str!("../assets/prompts/instruction.txt");
pub const COT_CONTRACT: &str = include_str!("../assets/prompts/cot.txt");

/// Environment variable holding the remote model's API key.
pub const API_KEY_ENV: &str = "TTG_LLM_API_KEY";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("invalid template: {0}")]
    Template(String),
    #[error("cannot parse verbalized path: {0}")]
    Parse(String),
    #[error("generation failed: {0}")]
    Generation(String),
}

fn render_triple(t: &Triple) -> String {
    format!("{} --{}--> {}", t.head, t.relation, t.tail)
}

/// Renders a retrieved path on one line.
pub fn verbalize_path(path: &RetrievedPath) -> String {
    path.chain
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let mut segment = render_triple(&node.triple);
            for branch in path.branches.iter().filter(|b| b.depth == i + 1) {
                segment.push_str(" [");
                segment.push_str(&render_triple(&branch.node.triple));
                segment.push(']');
            }
            segment
        })
        .collect::<Vec<_>>()
        .join(" ; ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPath {
    pub chain: Vec<Triple>,
    /// `(depth, triple)` with 1-based depth.
    pub branches: Vec<(usize, Triple)>,
}

fn parse_triple(text: &str) -> Result<Triple, PromptError> {
    let err = || PromptError::Parse(format!("bad segment {text:?}"));
    let (head, rest) = text.split_once(" --").ok_or_else(err)?;
    let (relation, tail) = rest.rsplit_once("--> ").ok_or_else(err)?;
    if head.is_empty() || tail.is_empty() {
        return Err(err());
    }
    Ok(Triple::new(head, relation, tail))
}

/// Inverse of [`verbalize_path`].
pub fn parse_verbalized(text: &str) -> Result<ParsedPath, PromptError> {
    let mut chain = Vec::new();
    let mut branches = Vec::new();
    for (i, segment) in text.split(" ; ").enumerate() {
        let (main, rest) = match segment.find(" [") {
            Some(pos) => (&segment[..pos], &segment[pos..]),
            None => (segment, ""),
        };
        chain.push(parse_triple(main)?);
        let mut rest = rest;
        while let Some(stripped) = rest.strip_prefix(" [") {
            let end = stripped
                .find(']')
                .ok_or_else(|| PromptError::Parse(format!("unclosed branch in {segment:?}")))?;
            branches.push((i + 1, parse_triple(&stripped[..end])?));
            rest = &stripped[end + 1..];
        }
        if !rest.is_empty() {
            return Err(PromptError::Parse(format!("trailing text {rest:?}")));
        }
    }
    Ok(ParsedPath { chain, branches })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub query: String,
    pub paths: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub mode: PromptMode,
    pub cot: bool,
    #[serde(default)]
    pub exemplars: Vec<Exemplar>,
    pub instruction: String,
}

impl PromptTemplate {
    pub fn zero_shot(cot: bool) -> Self {
        Self {
            mode: PromptMode::ZeroShot,
            cot,
            exemplars: Vec::new(),
            instruction: DEFAULT_INSTRUCTION.trim_end().to_string(),
        }
    }

    pub fn few_shot(exemplars: Vec<Exemplar>, cot: bool) -> Result<Self, PromptError> {
        let template = Self {
            mode: PromptMode::FewShot,
            cot,
            exemplars,
            instruction: DEFAULT_INSTRUCTION.trim_end().to_string(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.mode == PromptMode::FewShot && self.exemplars.is_empty() {
            return Err(PromptError::Template("few-shot template without exemplars".into()));
        }
        Ok(())
    }
}

/// Instruction, optional reasoning contract, exemplars, paths (one per
/// line), then the question.
pub fn build_prompt(query: &str, paths: &[RetrievedPath], template: &PromptTemplate) -> String {
    let mut out = String::new();
    out.push_str(template.instruction.trim_end());
    out.push('\n');
    if template.cot {
        out.push('\n');
        out.push_str(COT_CONTRACT.trim_end());
        out.push('\n');
    }
    if template.mode == PromptMode::FewShot {
        for (i, ex) in template.exemplars.iter().enumerate() {
            out.push_str(&format!("\nExample {}:\nQuestion: {}\n", i + 1, ex.query));
            if !ex.paths.is_empty() {
                out.push_str(&format!("Relational paths:\n{}\n", ex.paths));
            }
            out.push_str(&format!("answer: {}\n", ex.answer));
        }
    }
    if !paths.is_empty() {
        out.push_str("\nRelational paths:\n");
        for p in paths {
            out.push_str(&verbalize_path(p));
            out.push('\n');
        }
    }
    out.push_str(&format!("\nQuestion: {query}\n"));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Mock,
    Remote,
}

pub trait LlmClient: Send + Sync {
    fn kind(&self) -> ClientKind;
    fn complete(&self, prompt: &str) -> Result<String, PromptError>;
}

/// Deterministic stand-in. `complete` returns an empty string; answer
/// generation reads the answers off the retrieved paths instead.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockLlm;

impl LlmClient for MockLlm {
    fn kind(&self) -> ClientKind {
        ClientKind::Mock
    }

    fn complete(&self, _prompt: &str) -> Result<String, PromptError> {
        Ok(String::new())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteLlmConfig {
    pub endpoint: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_max_tokens() -> u32 {
    512
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// Client for `POST {"prompt", "max_tokens"}` → `{"text"}` endpoints.
/// Sends `Authorization: Bearer $TTG_LLM_API_KEY` when the variable is set.
pub struct RemoteLlm {
    config: RemoteLlmConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteLlm {
    pub const MAX_RETRIES: usize = 2;

    pub fn new(config: RemoteLlmConfig) -> Result<Self, PromptError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| PromptError::Generation(format!("http client: {e}")))?;
        Ok(Self {
            config,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            client,
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn request(&self, prompt: &str) -> Result<String, String> {
        let mut req = self.client.post(&self.config.endpoint).json(&CompletionRequest {
            prompt,
            max_tokens: self.config.max_tokens,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| e.to_string())?;
        if !response.status().is_success() {
            return Err(format!("HTTP {}", response.status()));
        }
        let body: CompletionResponse = response.json().map_err(|e| e.to_string())?;
        Ok(body.text)
    }
}

impl LlmClient for RemoteLlm {
    fn kind(&self) -> ClientKind {
        ClientKind::Remote
    }

    fn complete(&self, prompt: &str) -> Result<String, PromptError> {
        let mut last = String::new();
        for attempt in 0..=Self::MAX_RETRIES {
            match self.request(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("completion attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(PromptError::Generation(last))
    }
}

/// Text after the last `answer:` marker (any case), split on `,` and `;`.
/// `None` when the marker is missing.
pub fn parse_answer_field(text: &str) -> Option<Vec<String>> {
    let lower = text.to_ascii_lowercase();
    let pos = lower.rfind("answer:")?;
    let tail = &text[pos + "answer:".len()..];
    Some(
        tail.split([',', ';', '\n'])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generation {
    pub answers: Vec<String>,
    /// Set when the model reply had no parseable answer field.
    pub warning: Option<String>,
}

/// Asks `client` for answers. The mock client returns the terminal entities
/// of `paths` in rank order.
pub fn generate_answers(
    client: &dyn LlmClient,
    prompt: &str,
    paths: &[RetrievedPath],
) -> Result<Generation, PromptError> {
    match client.kind() {
        ClientKind::Mock => {
            let mut answers: Vec<String> = Vec::new();
            for p in paths {
                for e in &p.terminal_entities {
                    if !answers.contains(e) {
                        answers.push(e.clone());
                    }
                }
            }
            Ok(Generation { answers, warning: None })
        }
        ClientKind::Remote => {
            let text = client.complete(prompt)?;
            Ok(match parse_answer_field(&text) {
                Some(answers) => Generation { answers, warning: None },
                None => Generation {
                    answers: Vec::new(),
                    warning: Some("model reply has no `answer:` field".into()),
                },
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieve::{Branch, PathNode};
    use std::collections::BTreeSet;

    fn pn(id: usize, h: &str, r: &str, t: &str) -> PathNode {
        PathNode {
            node_id: id,
            triple: Triple::new(h, r, t),
        }
    }

    fn path(chain: Vec<PathNode>, branches: Vec<Branch>, terminal: &str) -> RetrievedPath {
        RetrievedPath {
            hop_count: chain.len(),
            chain,
            branches,
            score: 0.5,
            terminal_entities: BTreeSet::from([terminal.to_string()]),
        }
    }

    #[test]
    fn verbalizes_chains() {
        let one = path(vec![pn(0, "A", "r1", "B")], vec![], "B");
        assert_eq!(verbalize_path(&one), "A --r1--> B");
        let two = path(vec![pn(0, "A", "r1", "B"), pn(1, "B", "r2", "C")], vec![], "C");
        assert_eq!(verbalize_path(&two), "A --r1--> B ; B --r2--> C");
    }

    #[test]
    fn branch_is_bracketed_after_its_hop_and_parses_back() {
        let p = path(
            vec![pn(0, "A", "r1", "B"), pn(1, "B", "r2", "C")],
            vec![Branch {
                depth: 1,
                node: pn(2, "A", "rc", "K"),
            }],
            "C",
        );
        let text = verbalize_path(&p);
        assert_eq!(text, "A --r1--> B [A --rc--> K] ; B --r2--> C");
        assert_eq!(text.matches("--rc-->").count(), 1);
        let parsed = parse_verbalized(&text).unwrap();
        assert_eq!(parsed.chain, vec![Triple::new("A", "r1", "B"), Triple::new("B", "r2", "C")]);
        assert_eq!(parsed.branches, vec![(1, Triple::new("A", "rc", "K"))]);
    }

    #[test]
    fn relations_with_spaces_and_dashes_parse() {
        let p = path(vec![pn(0, "MK-2206", "Binding, ligand", "AKT1")], vec![], "AKT1");
        let parsed = parse_verbalized(&verbalize_path(&p)).unwrap();
        assert_eq!(parsed.chain[0], Triple::new("MK-2206", "Binding, ligand", "AKT1"));
        assert!(parse_verbalized("no arrow here").is_err());
    }

    #[test]
    fn zero_shot_prompt_is_instruction_plus_query() {
        let t = PromptTemplate::zero_shot(false);
        let prompt = build_prompt("What does Fetal Distress affect?", &[], &t);
        assert_eq!(
            prompt,
            format!("{}\n\nQuestion: What does Fetal Distress affect?\n", DEFAULT_INSTRUCTION.trim_end())
        );
    }

    #[test]
    fn few_shot_exemplars_precede_query() {
        let exemplars = vec![
            Exemplar {
                query: "Q one?".into(),
                paths: "A --r--> B".into(),
                answer: "B".into(),
            },
            Exemplar {
                query: "Q two?".into(),
                paths: String::new(),
                answer: "C, D".into(),
            },
        ];
        let t = PromptTemplate::few_shot(exemplars, false).unwrap();
        let prompt = build_prompt("Final?", &[], &t);
        let q = prompt.find("Question: Final?").unwrap();
        assert!(prompt.find("Question: Q one?").unwrap() < q);
        assert!(prompt.find("Question: Q two?").unwrap() < q);
        assert!(prompt.contains("answer: C, D"));
        assert!(PromptTemplate::few_shot(vec![], false).is_err());
    }

    #[test]
    fn cot_prompt_states_output_contract() {
        let t = PromptTemplate::zero_shot(true);
        let p = path(vec![pn(0, "A", "r1", "B")], vec![], "B");
        let prompt = build_prompt("q?", &[p.clone(), p], &t);
        assert!(prompt.contains("step-by-step reasoning"));
        assert!(prompt.contains("answer:"));
        assert_eq!(prompt.matches("A --r1--> B\n").count(), 2);
        let again = vec![path(vec![pn(0, "A", "r1", "B")], vec![], "B"); 2];
        assert_eq!(prompt, build_prompt("q?", &again, &t));
    }

    #[test]
    fn mock_reads_answers_off_paths() {
        let paths = vec![
            path(vec![pn(0, "A", "r", "C")], vec![], "C"),
            path(vec![pn(1, "A", "s", "C")], vec![], "C"),
        ];
        let g = generate_answers(&MockLlm, "ignored", &paths).unwrap();
        assert_eq!(g.answers, vec!["C"]);
        assert!(g.warning.is_none());
    }

    struct Canned(&'static str);

    impl LlmClient for Canned {
        fn kind(&self) -> ClientKind {
            ClientKind::Remote
        }
        fn complete(&self, _prompt: &str) -> Result<String, PromptError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn remote_answer_parsing() {
        let g = generate_answers(&Canned("answer: nitric oxide"), "", &[]).unwrap();
        assert_eq!(g.answers, vec!["nitric oxide"]);
        let g = generate_answers(
            &Canned("step-by-step reasoning: A binds B, answer: x; y ,  z,"),
            "",
            &[],
        )
        .unwrap();
        assert_eq!(g.answers, vec!["x", "y", "z"]);
        let g = generate_answers(&Canned("I am not sure."), "", &[]).unwrap();
        assert!(g.answers.is_empty());
        assert!(g.warning.is_some());
        assert_eq!(
            parse_answer_field("Answer: first\nanswer: second").unwrap(),
            vec!["second"]
        );
    }
}

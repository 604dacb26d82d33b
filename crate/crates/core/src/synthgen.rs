//! Synthetic graphs and queries with known answers.
//!
//! Two generators live here. [`synth_queries`] instantiates relational
//! templates over an existing graph and derives a textual filter from the
//! answer entity's document. [`plant_query`] builds a small graph around a
//! single planted realization of a template, surrounded by decoy triples,
//! so the correct path and answer are known by construction. Every emitted
//! query is re-checked against [`brute_force_answers`].

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::tokens;
use crate::eval::{QueryRecord, Split, MAX_GOLD_ANSWERS};
use crate::prompt::{ClientKind, LlmClient, PromptError};
use crate::retrieve::{Branch, PathNode, RetrievedPath};
use crate::tkg::{TextualKnowledgeGraph, Triple};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("relation {0:?} is not in the graph's vocabulary")]
    UnknownRelation(String),
    #[error("malformed template: {0}")]
    Malformed(String),
    #[error("cannot parse template bank: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("no template has a binding in this graph")]
    NoInstantiableTemplate,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Llm(#[from] PromptError),
}

/// Abstract query shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TopologicalStructure {
    Chain1,
    Chain2,
    Chain3,
    Chain2Constraint,
    Chain3Constraint,
    /// One hop whose answer must be reached from the topic by two relations.
    Intersection,
}

impl TopologicalStructure {
    pub const ALL: [TopologicalStructure; 6] = [
        Self::Chain1,
        Self::Chain2,
        Self::Chain3,
        Self::Chain2Constraint,
        Self::Chain3Constraint,
        Self::Intersection,
    ];

    pub fn hop_count(self) -> usize {
        match self {
            Self::Chain1 | Self::Intersection => 1,
            Self::Chain2 | Self::Chain2Constraint => 2,
            Self::Chain3 | Self::Chain3Constraint => 3,
        }
    }

    /// Chain positions (0 = topic) carrying a constraint triple.
    pub fn constraint_positions(self) -> &'static [usize] {
        match self {
            Self::Chain1 | Self::Chain2 | Self::Chain3 => &[],
            Self::Chain2Constraint | Self::Intersection => &[0],
            Self::Chain3Constraint => &[1],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Chain1 => "CHAIN1",
            Self::Chain2 => "CHAIN2",
            Self::Chain3 => "CHAIN3",
            Self::Chain2Constraint => "CHAIN2_CONSTRAINT",
            Self::Chain3Constraint => "CHAIN3_CONSTRAINT",
            Self::Intersection => "INTERSECTION",
        }
    }
}

impl std::fmt::Display for TopologicalStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TopologicalStructure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown structure {s:?}"))
    }
}

/// What the far end of a constraint triple must be.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintTarget {
    /// The next chain entity: a second relation between consecutive hops.
    Next,
    /// A further entity of this type, named in the query.
    Anchor { etype: String },
}

/// An extra triple `(x_position, relation, target)` every answer's
/// realization must also contain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub position: usize,
    pub relation: String,
    pub target: ConstraintTarget,
}

/// A structure with concrete relations and entity types. Chain hop `i`
/// is the triple `(x_i, relation_sequence[i], x_{i+1})`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationalTemplate {
    pub structure: TopologicalStructure,
    pub relation_sequence: Vec<String>,
    pub entity_type_sequence: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintSpec>,
}

impl RelationalTemplate {
    pub fn hop_count(&self) -> usize {
        self.relation_sequence.len()
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        let bad = |m: String| Err(TemplateError::Malformed(m));
        let hops = self.structure.hop_count();
        if self.relation_sequence.len() != hops {
            return bad(format!("{} needs {hops} relations, got {}", self.structure, self.relation_sequence.len()));
        }
        if self.entity_type_sequence.len() != hops + 1 {
            return bad(format!(
                "{} needs {} entity types, got {}",
                self.structure,
                hops + 1,
                self.entity_type_sequence.len()
            ));
        }
        if self.relation_sequence.iter().any(|r| r.is_empty()) {
            return bad("empty relation".into());
        }
        let positions = self.structure.constraint_positions();
        match (&self.constraint, positions.first()) {
            (None, None) => Ok(()),
            (Some(c), Some(&p)) if c.position == p && !c.relation.is_empty() => match (&c.target, self.structure) {
                (ConstraintTarget::Next, TopologicalStructure::Chain3Constraint) => {
                    bad("CHAIN3_CONSTRAINT needs an anchor target".into())
                }
                (ConstraintTarget::Anchor { .. }, TopologicalStructure::Chain2Constraint | TopologicalStructure::Intersection) => {
                    bad(format!("{} needs a next-hop target", self.structure))
                }
                _ => Ok(()),
            },
            (Some(c), Some(&p)) => bad(format!("constraint must sit at position {p} with a relation, got {}", c.position)),
            (Some(_), None) => bad(format!("{} takes no constraint", self.structure)),
            (None, Some(_)) => bad(format!("{} needs a constraint", self.structure)),
        }
    }

    /// All relations the template mentions.
    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.relation_sequence
            .iter()
            .map(String::as_str)
            .chain(self.constraint.iter().map(|c| c.relation.as_str()))
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct TemplateBank {
    templates: Vec<RelationalTemplate>,
}

/// Parses a template bank: `{"templates": [...]}`.
pub fn load_template_bank(json: &str) -> Result<Vec<RelationalTemplate>, TemplateError> {
    let bank: TemplateBank = serde_json::from_str(json)?;
    for t in &bank.templates {
        t.validate()?;
    }
    Ok(bank.templates)
}

pub fn write_template_bank(templates: &[RelationalTemplate]) -> String {
    serde_json::to_string_pretty(&TemplateBank {
        templates: templates.to_vec(),
    })
    .expect("templates serialize")
}

/// Gene/chemical/disease templates covering all six structures.
pub fn default_templates() -> Vec<RelationalTemplate> {
    load_template_bank(include_str!("../assets/templates.json")).expect("bundled template bank is valid")
}

/// Biomedical relation names used for decoy triples in planted graphs.
pub const DECOY_RELATIONS: &[&str] = &[
    "Production by cell population",
    "Relationships involving regulation and pathways",
    "Inhibits cell growth",
    "Biomarkers (progression)",
    "Enzyme activity",
    "Prevents, suppresses, or alleviates, reduces",
    "Side effect or adverse event",
    "Binding, ligand",
    "Affects expression/production",
    "Metabolism, pharmacokinetics",
    "Transport, channels",
    "Role in pathogenesis",
];

fn content_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    tokens(text).filter(|t| !crate::embed::STOPWORDS.contains(&t.as_str()))
}

/// Entities realizing a template: `entities[i]` is `x_i`, and `anchor` is
/// the constraint's far end when the target is an anchor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Binding {
    pub entities: Vec<String>,
    pub anchor: Option<String>,
}

impl Binding {
    pub fn topic(&self) -> &str {
        &self.entities[0]
    }

    pub fn answer(&self) -> &str {
        self.entities.last().expect("bindings are non-empty")
    }
}

fn type_ok(tkg: &TextualKnowledgeGraph, entity: &str, want: &str) -> bool {
    want.is_empty() || tkg.etype(entity).eq_ignore_ascii_case(want)
}

struct RelationIndex<'a> {
    by_head: BTreeMap<&'a str, BTreeMap<&'a str, Vec<&'a str>>>,
    present: HashSet<(&'a str, &'a str, &'a str)>,
    heads: BTreeMap<&'a str, BTreeSet<&'a str>>,
}

impl<'a> RelationIndex<'a> {
    fn new(tkg: &'a TextualKnowledgeGraph) -> Self {
        let mut by_head: BTreeMap<&str, BTreeMap<&str, Vec<&str>>> = BTreeMap::new();
        let mut present = HashSet::new();
        let mut heads: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for t in &tkg.triples {
            by_head.entry(&t.head).or_default().entry(&t.relation).or_default().push(&t.tail);
            present.insert((t.head.as_str(), t.relation.as_str(), t.tail.as_str()));
            heads.entry(&t.relation).or_default().insert(&t.head);
        }
        Self { by_head, present, heads }
    }

    fn tails(&self, head: &str, relation: &str) -> &[&'a str] {
        self.by_head
            .get(head)
            .and_then(|m| m.get(relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Every binding, optionally with a fixed topic. Sorted and deduplicated.
fn enumerate_bindings(tkg: &TextualKnowledgeGraph, template: &RelationalTemplate, topic: Option<&str>) -> Vec<Binding> {
    let index = RelationIndex::new(tkg);
    let types = &template.entity_type_sequence;
    let starts: Vec<&str> = match topic {
        Some(t) => vec![t],
        None => index
            .heads
            .get(template.relation_sequence[0].as_str())
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default(),
    };

    let mut chains: Vec<Vec<&str>> = starts
        .into_iter()
        .filter(|s| type_ok(tkg, s, &types[0]))
        .map(|s| vec![s])
        .collect();
    for (hop, relation) in template.relation_sequence.iter().enumerate() {
        let mut next = Vec::new();
        for chain in &chains {
            let last = chain[chain.len() - 1];
            for &tail in index.tails(last, relation) {
                if type_ok(tkg, tail, &types[hop + 1]) {
                    let mut longer = chain.clone();
                    longer.push(tail);
                    next.push(longer);
                }
            }
        }
        chains = next;
    }

    let mut out = BTreeSet::new();
    for chain in chains {
        let entities: Vec<String> = chain.iter().map(|s| s.to_string()).collect();
        match &template.constraint {
            None => {
                out.insert(Binding { entities, anchor: None });
            }
            Some(c) => {
                let at = chain[c.position];
                match &c.target {
                    ConstraintTarget::Next => {
                        if index.present.contains(&(at, c.relation.as_str(), chain[c.position + 1])) {
                            out.insert(Binding { entities, anchor: None });
                        }
                    }
                    ConstraintTarget::Anchor { etype } => {
                        for &a in index.tails(at, &c.relation) {
                            if type_ok(tkg, a, etype) {
                                out.insert(Binding {
                                    entities: entities.clone(),
                                    anchor: Some(a.to_string()),
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}

/// All bindings of `template` in `tkg`, shuffled by `rng`.
pub fn instantiate_template<R: Rng>(
    tkg: &TextualKnowledgeGraph,
    template: &RelationalTemplate,
    rng: &mut R,
) -> Result<Vec<Binding>, TemplateError> {
    template.validate()?;
    if let Some(missing) = template.relations().find(|r| !tkg.relations.contains(*r)) {
        return Err(TemplateError::UnknownRelation(missing.to_string()));
    }
    let mut bindings = enumerate_bindings(tkg, template, None);
    bindings.shuffle(rng);
    Ok(bindings)
}

/// Keeps entities whose document contains every token of `keyword`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextualFilter {
    pub keyword: String,
}

impl TextualFilter {
    pub fn new(keyword: impl Into<String>) -> Self {
        Self { keyword: keyword.into() }
    }

    pub fn matches(&self, document: &str) -> bool {
        let doc: HashSet<String> = tokens(document).collect();
        let mut wanted = tokens(&self.keyword).peekable();
        wanted.peek().is_some() && wanted.all(|t| doc.contains(&t))
    }
}

/// Terminal entities reachable from `topic` through `template`, restricted
/// to bindings using `anchor` (when given) and to answers whose document
/// passes `filter` (when given).
pub fn brute_force_answers(
    tkg: &TextualKnowledgeGraph,
    template: &RelationalTemplate,
    topic: &str,
    anchor: Option<&str>,
    filter: Option<&TextualFilter>,
) -> BTreeSet<String> {
    if template.validate().is_err() {
        return BTreeSet::new();
    }
    enumerate_bindings(tkg, template, Some(topic))
        .into_iter()
        .filter(|b| anchor.is_none() || b.anchor.as_deref() == anchor)
        .map(|b| b.answer().to_string())
        .filter(|a| filter.is_none_or(|f| f.matches(tkg.document(a))))
        .collect()
}

fn hop_list(relations: &[String]) -> String {
    match relations {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and then {b}"),
        [init @ .., last] => format!("{}, and then {last}", init.join(", then ")),
    }
}

/// Surface form of a bound template.
pub fn compose_query(template: &RelationalTemplate, binding: &Binding, keyword: Option<&str>) -> String {
    let ty = |i: usize| template.entity_type_sequence[i].to_lowercase();
    let hops = template.hop_count();
    let mut q = format!(
        "Which {} is connected to the {} {} by {}",
        ty(hops),
        ty(0),
        binding.topic(),
        hop_list(&template.relation_sequence)
    );
    if let Some(c) = &template.constraint {
        let holder = |i: usize| if i == 0 { binding.topic().to_string() } else { format!("the {}", ty(i)) };
        match &c.target {
            ConstraintTarget::Next => {
                let object = if c.position + 1 == hops { "it".to_string() } else { format!("the {}", ty(c.position + 1)) };
                q.push_str(&format!(", where {} also has {} with {object}", holder(c.position), c.relation));
            }
            ConstraintTarget::Anchor { .. } => {
                let anchor = binding.anchor.as_deref().unwrap_or("?");
                q.push_str(&format!(", where {} also has {} with {anchor}", holder(c.position), c.relation));
            }
        }
    }
    if let Some(k) = keyword {
        q.push_str(&format!(", and is described as {k}"));
    }
    q.push('?');
    q
}

const STOPWORDS: &[&str] = &[
    "about", "also", "been", "from", "have", "into", "noted", "over", "such", "that", "their", "there", "these",
    "this", "those", "were", "when", "where", "which", "while", "with",
];

/// Longest word of the first sentence (at least four letters, not a
/// stopword, not in `exclude`); the first one wins ties.
pub fn first_sentence_keyword(document: &str, exclude: &[&str]) -> Option<String> {
    let end = document
        .char_indices()
        .find(|&(i, c)| matches!(c, '.' | '!' | '?') && document[i + 1..].chars().next().is_none_or(char::is_whitespace))
        .map(|(i, _)| i)
        .unwrap_or(document.len());
    let excluded: HashSet<String> = exclude.iter().flat_map(|e| tokens(e).collect::<Vec<_>>()).collect();
    let mut best: Option<String> = None;
    for tok in tokens(&document[..end]) {
        if tok.chars().count() < 4
            || !tok.chars().all(char::is_alphabetic)
            || STOPWORDS.contains(&tok.as_str())
            || excluded.contains(&tok)
        {
            continue;
        }
        if best.as_ref().is_none_or(|b| tok.chars().count() > b.chars().count()) {
            best = Some(tok);
        }
    }
    best
}

fn extract_keyword(
    client: Option<&dyn LlmClient>,
    document: &str,
    exclude: &[&str],
) -> Result<Option<String>, SynthError> {
    let fallback = first_sentence_keyword(document, exclude);
    let Some(client) = client.filter(|c| c.kind() == ClientKind::Remote) else {
        return Ok(fallback);
    };
    let prompt = format!(
        "Give one distinctive keyword from the following entity description. Reply with the keyword only.\n\n{document}"
    );
    let reply = client.complete(&prompt)?;
    let candidate = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("").to_string();
    if !candidate.is_empty() && TextualFilter::new(&candidate).matches(document) {
        Ok(Some(candidate))
    } else {
        log::warn!("keyword {candidate:?} from the model does not occur in the document; using the first-sentence keyword");
        Ok(fallback)
    }
}

fn draw_split<R: Rng>(rng: &mut R) -> Split {
    match rng.random_range(0..10) {
        0..=7 => Split::Train,
        8 => Split::Val,
        _ => Split::Test,
    }
}

/// Samples up to `n` queries from template bindings in `tkg`.
///
/// Each binding gets a keyword from its answer's document (from
/// `text_client` when it is a remote model, otherwise the first-sentence
/// rule). Answers are recomputed by brute force under that filter and the
/// query is dropped when more than three survive.
pub fn synth_queries<R: Rng>(
    tkg: &TextualKnowledgeGraph,
    templates: &[RelationalTemplate],
    n: usize,
    text_client: Option<&dyn LlmClient>,
    rng: &mut R,
) -> Result<Vec<QueryRecord>, SynthError> {
    Ok(synth_queries_detailed(tkg, templates, n, text_client, rng)?
        .into_iter()
        .map(|q| q.record)
        .collect())
}

/// A synthesized query with the template binding behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesizedQuery {
    pub record: QueryRecord,
    pub template: RelationalTemplate,
    pub binding: Binding,
    pub keyword: String,
}

/// [`synth_queries`], keeping the template, binding and keyword.
pub fn synth_queries_detailed<R: Rng>(
    tkg: &TextualKnowledgeGraph,
    templates: &[RelationalTemplate],
    n: usize,
    text_client: Option<&dyn LlmClient>,
    rng: &mut R,
) -> Result<Vec<SynthesizedQuery>, SynthError> {
    if n == 0 {
        return Err(SynthError::Argument("n must be >= 1".into()));
    }
    let mut pool: Vec<(usize, Binding)> = Vec::new();
    for (i, template) in templates.iter().enumerate() {
        template.validate()?;
        if template.relations().any(|r| !tkg.relations.contains(r)) {
            log::debug!("skipping template {i}: relation missing from graph");
            continue;
        }
        pool.extend(instantiate_template(tkg, template, rng)?.into_iter().map(|b| (i, b)));
    }
    if pool.is_empty() {
        return Err(SynthError::NoInstantiableTemplate);
    }
    pool.shuffle(rng);

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (ti, binding) in pool {
        if out.len() == n {
            break;
        }
        let template = &templates[ti];
        let answer = binding.answer();
        let exclude = [answer, tkg.etype(answer)];
        let Some(keyword) = extract_keyword(text_client, tkg.document(answer), &exclude)? else {
            continue;
        };
        let filter = TextualFilter::new(&keyword);
        let answers = brute_force_answers(tkg, template, binding.topic(), binding.anchor.as_deref(), Some(&filter));
        if answers.is_empty() || answers.len() > MAX_GOLD_ANSWERS {
            continue;
        }
        let query = compose_query(template, &binding, Some(&keyword));
        if !seen.insert(query.clone()) {
            continue;
        }
        let record = QueryRecord {
            id: format!("syn-{:05}", out.len()),
            query,
            topic_entity: binding.topic().to_string(),
            gold_answers: answers.into_iter().collect(),
            structure: template.structure.to_string(),
            split: draw_split(rng),
        };
        out.push(SynthesizedQuery {
            record,
            template: template.clone(),
            binding,
            keyword,
        });
    }
    Ok(out)
}

/// A planted query with its graph-independent description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedQuery {
    pub record: QueryRecord,
    /// The planted realization; node ids index the returned graph's triples.
    pub gold_path: RetrievedPath,
    pub distractor_count: usize,
    pub template: RelationalTemplate,
    pub binding: Binding,
    pub keyword: String,
}

const SYLLABLES: &[&str] = &[
    "ba", "cor", "da", "fen", "gal", "hex", "ir", "jun", "kal", "lor", "mer", "nix", "ob", "pra", "quin", "ros",
    "sul", "tan", "ul", "vex", "wor", "xan", "yl", "zor",
];

const DECOY_TYPES: &[&str] = &["Gene", "Chemical", "Disease"];

struct Planter<'a, R: Rng> {
    rng: &'a mut R,
    prefix: String,
    tkg: TextualKnowledgeGraph,
    names: HashSet<String>,
    keywords: &'a mut HashSet<String>,
    budget: usize,
    decoy_relations: Vec<&'static str>,
}

impl<R: Rng> Planter<'_, R> {
    fn keyword(&mut self) -> String {
        loop {
            let mut word = String::new();
            while word.len() < 9 {
                word.push_str(SYLLABLES.choose(self.rng).expect("non-empty"));
            }
            if self.keywords.insert(word.clone()) {
                return word;
            }
        }
    }

    /// A fresh entity with a one-keyword document.
    fn entity(&mut self, etype: &str) -> (String, String) {
        let initial = etype.chars().next().unwrap_or('E').to_ascii_uppercase();
        let name = loop {
            let candidate = format!("{}{initial}{}", self.prefix, self.rng.random_range(1000..10000));
            if self.names.insert(candidate.clone()) {
                break candidate;
            }
        };
        let keyword = self.keyword();
        self.tkg.add_entity(&name, etype).expect("generated names are non-empty");
        self.tkg.set_document(&name, format!("{keyword}."));
        (name, keyword)
    }

    fn triple(&mut self, head: &str, relation: &str, tail: &str) -> Triple {
        let t = Triple::new(head, relation, tail);
        self.tkg.add_triple(t.clone()).expect("generated ids are non-empty");
        t
    }

    /// Adds a decoy triple if budget remains.
    fn decoy(&mut self, head: &str, relation: &str, tail: &str) {
        if self.budget > 0 {
            self.budget -= 1;
            self.triple(head, relation, tail);
        }
    }

    fn decoy_relation(&mut self) -> String {
        self.decoy_relations.choose(self.rng).expect("decoy vocabulary").to_string()
    }

    fn decoy_entity(&mut self) -> String {
        let ty = *DECOY_TYPES.choose(self.rng).expect("types");
        self.entity(ty).0
    }
}

/// Builds a graph holding one realization of a template with `shape`, plus
/// exactly `distractors` decoy triples, and the matching query.
///
/// The answer's document carries a keyword that also appears in the query,
/// as do the template's relation names and the topic. Decoys are spurs off
/// every gold entity plus a ring joining the spur ends, so every walk can
/// continue; their relations share no content word with the template.
pub fn plant_query<R: Rng>(
    shape: TopologicalStructure,
    distractors: usize,
    rng: &mut R,
) -> (TextualKnowledgeGraph, PlantedQuery) {
    let mut keywords = HashSet::new();
    plant_with(shape, distractors, "", "plant", &default_templates(), &mut keywords, rng)
}

fn plant_with<R: Rng>(
    shape: TopologicalStructure,
    distractors: usize,
    prefix: &str,
    id: &str,
    bank: &[RelationalTemplate],
    keywords: &mut HashSet<String>,
    rng: &mut R,
) -> (TextualKnowledgeGraph, PlantedQuery) {
    let candidates: Vec<&RelationalTemplate> = bank.iter().filter(|t| t.structure == shape).collect();
    let template = (*candidates.choose(rng).expect("template bank covers every structure")).clone();
    let template_words: HashSet<String> = template.relations().flat_map(content_tokens).collect();
    let mut p = Planter {
        rng,
        prefix: prefix.to_string(),
        tkg: TextualKnowledgeGraph::new(),
        names: HashSet::new(),
        keywords,
        budget: distractors,
        // decoys never share a content word with the template's relations
        decoy_relations: DECOY_RELATIONS
            .iter()
            .copied()
            .filter(|r| content_tokens(r).all(|t| !template_words.contains(&t)))
            .collect(),
    };

    let hops = template.hop_count();
    let types = &template.entity_type_sequence;
    let mut chain = Vec::new();
    let mut answer_keyword = String::new();
    for ty in types {
        let (name, keyword) = p.entity(ty);
        chain.push(name);
        answer_keyword = keyword;
    }
    let mut gold_triples = Vec::new();
    for (i, relation) in template.relation_sequence.iter().enumerate() {
        gold_triples.push(p.triple(&chain[i], relation, &chain[i + 1]));
    }
    let mut anchor = None;
    let mut constraint_triple = None;
    if let Some(c) = &template.constraint {
        let target = match &c.target {
            ConstraintTarget::Next => chain[c.position + 1].clone(),
            ConstraintTarget::Anchor { etype } => {
                let (name, _) = p.entity(etype);
                anchor = Some(name.clone());
                name
            }
        };
        constraint_triple = Some((c.position, p.triple(&chain[c.position], &c.relation, &target)));
    }

    // Decoys, in priority order, until the budget is spent.
    let mut ring: Vec<String> = Vec::new();
    let mut spur_owners: Vec<String> = vec![chain[0].clone()];
    spur_owners.extend(chain.iter().cloned());
    spur_owners.extend(anchor.clone());
    for owner in spur_owners {
        if p.budget == 0 {
            break;
        }
        let decoy = p.decoy_entity();
        let rel = p.decoy_relation();
        if p.rng.random_bool(0.5) {
            p.decoy(&owner, &rel, &decoy);
        } else {
            p.decoy(&decoy, &rel, &owner);
        }
        ring.push(decoy);
    }

    // The ring: fresh decoys with the spur entities spread evenly around
    // it, so no short detour links two gold entities.
    if p.budget > 0 {
        if ring.is_empty() {
            ring.push(p.decoy_entity());
        }
        let fresh: Vec<String> = (0..p.budget.saturating_sub(ring.len())).map(|_| p.decoy_entity()).collect();
        let len = ring.len() + fresh.len();
        let mut slots: Vec<Option<String>> = vec![None; len];
        for (j, e) in ring.iter().enumerate() {
            slots[j * len / ring.len()] = Some(e.clone());
        }
        let mut fresh = fresh.into_iter();
        let ring: Vec<String> = slots
            .into_iter()
            .map(|s| s.unwrap_or_else(|| fresh.next().expect("slot count matches")))
            .collect();
        let mut i = 0;
        while p.budget > 0 {
            let rel = p.decoy_relation();
            let (a, b) = (ring[i % len].clone(), ring[(i + 1) % len].clone());
            let b = if a == b { p.decoy_entity() } else { b };
            p.decoy(&a, &rel, &b);
            i += 1;
        }
    }
    let distractor_count = p.tkg.triples.len() - gold_triples.len() - usize::from(constraint_triple.is_some());

    let binding = Binding {
        entities: chain.clone(),
        anchor,
    };
    let tkg = p.tkg;
    let filter = TextualFilter::new(&answer_keyword);
    let answers = brute_force_answers(&tkg, &template, &chain[0], binding.anchor.as_deref(), Some(&filter));
    assert_eq!(
        answers,
        BTreeSet::from([chain[hops].clone()]),
        "planted graph must have exactly the planted answer"
    );
    assert_eq!(enumerate_bindings(&tkg, &template, Some(&chain[0])).len(), 1, "planted realization must be unique");

    let node_of = |t: &Triple| PathNode {
        node_id: tkg.triples.iter().position(|x| x == t).expect("planted triple present"),
        triple: t.clone(),
    };
    let gold_path = RetrievedPath {
        chain: gold_triples.iter().map(node_of).collect(),
        branches: constraint_triple
            .iter()
            .map(|(pos, t)| Branch {
                depth: pos + 1,
                node: node_of(t),
            })
            .collect(),
        score: 0.0,
        terminal_entities: BTreeSet::from([chain[hops].clone()]),
        hop_count: hops,
    };
    let record = QueryRecord {
        id: id.to_string(),
        query: compose_query(&template, &binding, Some(&answer_keyword)),
        topic_entity: chain[0].clone(),
        gold_answers: vec![chain[hops].clone()],
        structure: shape.to_string(),
        split: draw_split(p.rng),
    };
    (
        tkg,
        PlantedQuery {
            record,
            gold_path,
            distractor_count,
            template,
            binding,
            keyword: answer_keyword,
        },
    )
}

/// `n` planted queries, cycling through `shapes`, merged into one graph.
/// Entity names carry a per-query prefix so the plants stay disjoint, and
/// gold node ids are rebased onto the merged graph.
pub fn plant_corpus<R: Rng>(
    n: usize,
    shapes: &[TopologicalStructure],
    distractors: usize,
    rng: &mut R,
) -> Result<(TextualKnowledgeGraph, Vec<PlantedQuery>), SynthError> {
    if shapes.is_empty() {
        return Err(SynthError::Argument("at least one structure is required".into()));
    }
    let bank = default_templates();
    let mut keywords = HashSet::new();
    let mut merged = TextualKnowledgeGraph::new();
    let mut queries = Vec::with_capacity(n);
    for i in 0..n {
        let shape = shapes[i % shapes.len()];
        let (tkg, mut planted) = plant_with(
            shape,
            distractors,
            &format!("q{i}-"),
            &format!("plant-{i:05}"),
            &bank,
            &mut keywords,
            rng,
        );
        let offset = merged.triples.len();
        let added = merged
            .merge(&tkg)
            .map_err(|e| SynthError::Argument(format!("merging plant {i}: {e}")))?;
        debug_assert_eq!(added, tkg.triples.len());
        for node in planted
            .gold_path
            .chain
            .iter_mut()
            .chain(planted.gold_path.branches.iter_mut().map(|b| &mut b.node))
        {
            node.node_id += offset;
        }
        queries.push(planted);
    }
    Ok((merged, queries))
}

//! Textual knowledge graphs and the triple-as-node graph derived from them.
//!
//! A [`TextualKnowledgeGraph`] holds entities, a relation vocabulary, triples
//! and one free-text document per entity (coverage may be partial). Searchers
//! never walk the entity graph directly; they walk a [`TextualTripleGraph`]
//! whose nodes are triples and whose edges join triples sharing an entity.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a [`TripleNode`] inside its [`TextualTripleGraph`].
pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum TkgError {
    #[error("{source_name} line {line}: {message}")]
    Parse {
        source_name: &'static str,
        line: usize,
        message: String,
    },
    #[error("{source_name} line {line}: rejected record: {message}")]
    Rejected {
        source_name: &'static str,
        line: usize,
        message: String,
    },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub label: String,
    /// Entity-type tag such as `Gene`; empty when unknown.
    pub etype: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    pub fn contains(&self, entity: &str) -> bool {
        self.head == entity || self.tail == entity
    }

    /// The entity on the other side of `entity`, if `entity` is part of this triple.
    pub fn other(&self, entity: &str) -> Option<&str> {
        if self.head == entity {
            Some(&self.tail)
        } else if self.tail == entity {
            Some(&self.head)
        } else {
            None
        }
    }

    pub fn shares_entity(&self, other: &Triple) -> bool {
        self.contains(&other.head) || self.contains(&other.tail)
    }
}

/// Entities, relation vocabulary, triples and per-entity documents.
///
/// Maps are ordered so that everything derived from a graph (files, node
/// ids, reports) is reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextualKnowledgeGraph {
    pub entities: BTreeMap<String, Entity>,
    pub relations: BTreeSet<String>,
    pub triples: Vec<Triple>,
    pub documents: BTreeMap<String, String>,
    /// Documents whose key names no entity. Kept aside so `documents`
    /// only ever covers known entities.
    pub dangling_documents: BTreeMap<String, String>,
}

impl TextualKnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an entity, or fills in the type of an auto-created one.
    pub fn add_entity(&mut self, id: &str, etype: &str) -> Result<(), TkgError> {
        if id.is_empty() {
            return Err(TkgError::Invalid("entity id is empty".into()));
        }
        let entry = self.entities.entry(id.to_string()).or_insert_with(|| Entity {
            id: id.to_string(),
            label: id.to_string(),
            etype: String::new(),
        });
        if entry.etype.is_empty() {
            entry.etype = etype.to_string();
        }
        Ok(())
    }

    /// Adds a triple, creating missing endpoints. Returns `false` for an
    /// exact duplicate, which is dropped.
    pub fn add_triple(&mut self, triple: Triple) -> Result<bool, TkgError> {
        if triple.head.is_empty() || triple.tail.is_empty() {
            return Err(TkgError::Invalid(format!("triple with empty entity id: {triple:?}")));
        }
        self.add_entity(&triple.head, "")?;
        self.add_entity(&triple.tail, "")?;
        if self.triples.contains(&triple) {
            return Ok(false);
        }
        self.relations.insert(triple.relation.clone());
        self.triples.push(triple);
        Ok(true)
    }

    /// Folds `other` into `self`: entities (types fill gaps only), triples
    /// not already present, and documents, where `other` wins on conflict.
    /// Returns the number of triples added.
    pub fn merge(&mut self, other: &TextualKnowledgeGraph) -> Result<usize, TkgError> {
        for entity in other.entities.values() {
            self.add_entity(&entity.id, &entity.etype)?;
        }
        let mut present: HashSet<Triple> = self.triples.iter().cloned().collect();
        let mut added = 0;
        for t in &other.triples {
            if present.insert(t.clone()) {
                self.relations.insert(t.relation.clone());
                self.triples.push(t.clone());
                added += 1;
            }
        }
        for (entity, text) in other.documents.iter().chain(&other.dangling_documents) {
            self.set_document(entity, text.clone());
        }
        Ok(added)
    }

    pub fn set_document(&mut self, entity: &str, text: impl Into<String>) {
        if self.entities.contains_key(entity) {
            self.documents.insert(entity.to_string(), text.into());
        } else {
            self.dangling_documents.insert(entity.to_string(), text.into());
        }
    }

    pub fn document(&self, entity: &str) -> &str {
        self.documents.get(entity).map(String::as_str).unwrap_or("")
    }

    pub fn etype(&self, entity: &str) -> &str {
        self.entities.get(entity).map(|e| e.etype.as_str()).unwrap_or("")
    }

    /// Writes the tab-separated triples format, including the type column.
    pub fn write_triples<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.triples {
            writeln!(
                out,
                "{}\t{}\t{}\t{}|{}",
                t.head,
                t.relation,
                t.tail,
                self.etype(&t.head),
                self.etype(&t.tail)
            )?;
        }
        Ok(())
    }

    /// Writes one JSON object per documented entity.
    pub fn write_descriptions<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (entity, text) in self.documents.iter().chain(&self.dangling_documents) {
            let record = DescriptionRecord {
                entity: entity.clone(),
                text: text.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&record)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DescriptionRecord {
    entity: String,
    text: String,
}

/// Reads a graph from a triples TSV stream and a descriptions JSONL stream.
///
/// Triples lines are `head<TAB>relation<TAB>tail[<TAB>htype|ttype]`; blank
/// lines and lines starting with `#` are skipped. Exact duplicate triples
/// are kept once.
pub fn load_tkg<T: BufRead, D: BufRead>(
    triples_source: T,
    descriptions_source: D,
) -> Result<TextualKnowledgeGraph, TkgError> {
    let mut tkg = TextualKnowledgeGraph::new();
    let mut seen: HashSet<Triple> = HashSet::new();

    for (idx, line) in triples_source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 && cols.len() != 4 {
            return Err(TkgError::Parse {
                source_name: "triples",
                line: line_no,
                message: format!("expected 3 or 4 tab-separated columns, found {}", cols.len()),
            });
        }
        let (head, relation, tail) = (cols[0].trim(), cols[1].trim(), cols[2].trim());
        if head.is_empty() || tail.is_empty() {
            return Err(TkgError::Rejected {
                source_name: "triples",
                line: line_no,
                message: "empty entity id".into(),
            });
        }
        if relation.is_empty() {
            return Err(TkgError::Rejected {
                source_name: "triples",
                line: line_no,
                message: "empty relation".into(),
            });
        }
        let (htype, ttype) = match cols.get(3) {
            Some(types) => types.split_once('|').ok_or_else(|| TkgError::Parse {
                source_name: "triples",
                line: line_no,
                message: format!("type column must be `htype|ttype`, got {types:?}"),
            })?,
            None => ("", ""),
        };
        tkg.add_entity(head, htype.trim())?;
        tkg.add_entity(tail, ttype.trim())?;
        let triple = Triple::new(head, relation, tail);
        if seen.insert(triple.clone()) {
            tkg.relations.insert(triple.relation.clone());
            tkg.triples.push(triple);
        }
    }

    for (idx, line) in descriptions_source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DescriptionRecord = serde_json::from_str(&line).map_err(|e| TkgError::Parse {
            source_name: "descriptions",
            line: idx + 1,
            message: e.to_string(),
        })?;
        if record.entity.is_empty() {
            return Err(TkgError::Rejected {
                source_name: "descriptions",
                line: idx + 1,
                message: "empty entity id".into(),
            });
        }
        tkg.set_document(&record.entity, record.text);
    }

    Ok(tkg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub entity_count: usize,
    pub triple_count: usize,
    pub relation_vocabulary_size: usize,
    pub dangling_document_keys: Vec<String>,
    pub entities_without_document: Vec<String>,
    /// `|entities with a document| / |entities|`, 0 for an empty graph.
    pub coverage: f64,
}

pub fn validate(tkg: &TextualKnowledgeGraph) -> ValidationReport {
    let entities_without_document: Vec<String> = tkg
        .entities
        .keys()
        .filter(|id| !tkg.documents.contains_key(*id))
        .cloned()
        .collect();
    let covered = tkg.entities.len() - entities_without_document.len();
    let coverage = if tkg.entities.is_empty() {
        0.0
    } else {
        covered as f64 / tkg.entities.len() as f64
    };
    ValidationReport {
        entity_count: tkg.entities.len(),
        triple_count: tkg.triples.len(),
        relation_vocabulary_size: tkg.relations.len(),
        dangling_document_keys: tkg.dangling_documents.keys().cloned().collect(),
        entities_without_document,
        coverage,
    }
}

/// A triple together with the documents of its two entities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleNode {
    pub node_id: NodeId,
    pub triple: Triple,
    pub head_text: String,
    pub tail_text: String,
}

impl TripleNode {
    /// `head : relation : tail : head_text : tail_text`, the text handed to
    /// embedders.
    pub fn serialized(&self) -> String {
        format!(
            "{} : {} : {} : {} : {}",
            self.triple.head, self.triple.relation, self.triple.tail, self.head_text, self.tail_text
        )
    }
}

/// Graph whose nodes are triples; two nodes are adjacent when their triples
/// share at least one entity (in any position).
#[derive(Debug, Clone)]
pub struct TextualTripleGraph {
    nodes: Vec<TripleNode>,
    adjacency: Vec<BTreeSet<NodeId>>,
    entity_index: BTreeMap<String, BTreeSet<NodeId>>,
}

impl TextualTripleGraph {
    pub fn nodes(&self) -> &[TripleNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TripleNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, id: NodeId) -> &BTreeSet<NodeId> {
        &self.adjacency[id]
    }

    pub fn entity_index(&self) -> &BTreeMap<String, BTreeSet<NodeId>> {
        &self.entity_index
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Nodes whose triple mentions `entity`; empty for unknown entities.
    pub fn incident_nodes(&self, entity: &str) -> BTreeSet<NodeId> {
        self.entity_index.get(entity).cloned().unwrap_or_default()
    }
}

/// Builds the triple graph. Node ids follow the input triple order.
pub fn build_ttg(tkg: &TextualKnowledgeGraph) -> TextualTripleGraph {
    let nodes: Vec<TripleNode> = tkg
        .triples
        .iter()
        .enumerate()
        .map(|(node_id, triple)| TripleNode {
            node_id,
            triple: triple.clone(),
            head_text: tkg.document(&triple.head).to_string(),
            tail_text: tkg.document(&triple.tail).to_string(),
        })
        .collect();

    let mut entity_index: BTreeMap<String, BTreeSet<NodeId>> = BTreeMap::new();
    for node in &nodes {
        entity_index.entry(node.triple.head.clone()).or_default().insert(node.node_id);
        entity_index.entry(node.triple.tail.clone()).or_default().insert(node.node_id);
    }

    let mut adjacency = vec![BTreeSet::new(); nodes.len()];
    for members in entity_index.values() {
        for &u in members {
            for &w in members {
                if u != w {
                    adjacency[u].insert(w);
                }
            }
        }
    }

    TextualTripleGraph {
        nodes,
        adjacency,
        entity_index,
    }
}

/// Convenience wrapper: `incident_nodes` as a free function.
pub fn incident_nodes(ttg: &TextualTripleGraph, entity: &str) -> BTreeSet<NodeId> {
    ttg.incident_nodes(entity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tkg_from(triples: &str, docs: &str) -> TextualKnowledgeGraph {
        load_tkg(triples.as_bytes(), docs.as_bytes()).unwrap()
    }

    #[test]
    fn loads_entities_triples_and_documents() {
        let tkg = tkg_from("A\tr1\tB\nB\tr2\tC\n", "{\"entity\": \"A\", \"text\": \"dA\"}\n");
        assert_eq!(tkg.entities.len(), 3);
        assert_eq!(tkg.triples.len(), 2);
        assert_eq!(tkg.documents.len(), 1);
        assert_eq!(tkg.document("A"), "dA");
        assert_eq!(tkg.entities["C"].etype, "");
    }

    #[test]
    fn duplicate_triples_are_dropped() {
        let tkg = tkg_from("A\tr\tB\nA\tr\tB\n", "");
        assert_eq!(tkg.triples.len(), 1);
    }

    #[test]
    fn comments_blank_lines_and_type_column() {
        let tkg = tkg_from("# header\n\nG1\tbinds\tC1\tGene|Chemical\n", "");
        assert_eq!(tkg.entities["G1"].etype, "Gene");
        assert_eq!(tkg.entities["C1"].etype, "Chemical");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = load_tkg("A\tr\tB\nbroken line\n".as_bytes(), "".as_bytes()).unwrap_err();
        match err {
            TkgError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let err = load_tkg("A\tr\tB\tGene\n".as_bytes(), "".as_bytes()).unwrap_err();
        assert!(matches!(err, TkgError::Parse { line: 1, .. }));
        let err = load_tkg("".as_bytes(), "{not json}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TkgError::Parse { source_name: "descriptions", line: 1, .. }));
    }

    #[test]
    fn empty_entity_id_is_rejected() {
        let err = load_tkg("A\tr\tB\n\tr\tC\n".as_bytes(), "".as_bytes()).unwrap_err();
        assert!(matches!(err, TkgError::Rejected { line: 2, .. }));
    }

    #[test]
    fn validation_reports_coverage_and_dangling_keys() {
        let tkg = tkg_from(
            "A\tr1\tB\nB\tr2\tC\n",
            "{\"entity\":\"A\",\"text\":\"a\"}\n{\"entity\":\"Z\",\"text\":\"z\"}\n",
        );
        let report = validate(&tkg);
        assert!((report.coverage - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.dangling_document_keys, vec!["Z".to_string()]);
        assert_eq!(report.entities_without_document, vec!["B".to_string(), "C".to_string()]);
        assert_eq!(report.relation_vocabulary_size, 2);
        assert!(!tkg.documents.contains_key("Z"));
    }

    #[test]
    fn ttg_shared_entity_rule() {
        let ttg = build_ttg(&tkg_from("A\tr\tB\nB\tr\tC\n", ""));
        assert_eq!(ttg.len(), 2);
        assert!(ttg.neighbors(0).contains(&1));
        assert!(ttg.neighbors(1).contains(&0));
        assert_eq!(ttg.edge_count(), 1);

        let ttg = build_ttg(&tkg_from("A\tr\tB\nC\tr\tD\n", ""));
        assert_eq!(ttg.edge_count(), 0);
    }

    #[test]
    fn self_relation_has_no_self_loop() {
        let ttg = build_ttg(&tkg_from("A\tr\tA\nA\ts\tB\n", ""));
        assert!(!ttg.neighbors(0).contains(&0));
        assert!(ttg.neighbors(0).contains(&1));
    }

    #[test]
    fn incident_nodes_lookup() {
        let ttg = build_ttg(&tkg_from("A\tr\tB\nB\tr\tC\n", ""));
        assert_eq!(ttg.incident_nodes("B"), BTreeSet::from([0, 1]));
        assert!(ttg.incident_nodes("Z").is_empty());
    }

    #[test]
    fn node_texts_are_verbatim_documents() {
        let ttg = build_ttg(&tkg_from(
            "A\tr\tB\n",
            "{\"entity\":\"B\",\"text\":\"  spaced  text \"}\n",
        ));
        assert_eq!(ttg.node(0).head_text, "");
        assert_eq!(ttg.node(0).tail_text, "  spaced  text ");
        assert_eq!(ttg.node(0).serialized(), "A : r : B :  :   spaced  text ");
    }

    #[test]
    fn writers_round_trip_through_loader() {
        let tkg = tkg_from(
            "G1\tbinds\tC1\tGene|Chemical\nC1\ttreats\tD1\tChemical|Disease\n",
            "{\"entity\":\"D1\",\"text\":\"a disease\"}\n{\"entity\":\"Q\",\"text\":\"orphan\"}\n",
        );
        let mut triples = Vec::new();
        let mut docs = Vec::new();
        tkg.write_triples(&mut triples).unwrap();
        tkg.write_descriptions(&mut docs).unwrap();
        let reloaded = load_tkg(triples.as_slice(), docs.as_slice()).unwrap();
        assert_eq!(reloaded, tkg);
    }
}

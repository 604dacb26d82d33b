//! Path retrieval over a [`TextualTripleGraph`]: random walks, plain Monte
//! Carlo tree search and relational MCTS.
//!
//! All three searchers start from the triples incident to a topic entity
//! and score candidate paths with a [`PathScorer`]. In production that is
//! [`EmbeddingScorer`] (similarity between the query and the path); tests
//! plug in oracle scorers that know the planted answer.

mod mcts;
mod state;
mod tree;
mod walk;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, Embedder, Embedding, RewardMode};
use crate::tkg::{NodeId, TextualTripleGraph, Triple};

pub use mcts::{mcts_retrieve, rmcts_retrieve, search, simulate_rollout, SearchOutcome};
pub use state::{expand_candidates, Action, Expansion, Level, PathKey, PathState, SearchMode};
pub use tree::{uct_from_log, uct_score, SearchNode, SearchTree};
pub use walk::{random_walk, random_walk_retrieve};

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("unknown topic entity {0:?}")]
    UnknownTopic(String),
    #[error("no candidate triples around topic entity {0:?}")]
    NoCandidates(String),
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RandomWalk,
    Mcts,
    Rmcts,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::RandomWalk => "random-walk",
            Method::Mcts => "mcts",
            Method::Rmcts => "rmcts",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random-walk" | "random_walk" | "rw" => Ok(Method::RandomWalk),
            "mcts" => Ok(Method::Mcts),
            "rmcts" | "relational-mcts" => Ok(Method::Rmcts),
            other => Err(format!("unknown method {other:?} (expected random-walk, mcts or rmcts)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Search iterations (one select/expand/simulate/update cycle each), or
    /// the number of walks for the random-walk baseline.
    pub iterations: usize,
    /// Maximum number of hops.
    pub max_depth: usize,
    /// UCT exploration constant.
    pub uct_c: f64,
    pub rollouts_per_expansion: usize,
    pub seed: u64,
    pub top_k: usize,
    pub reward_mode: RewardMode,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            iterations: 5000,
            max_depth: 3,
            uct_c: std::f64::consts::SQRT_2,
            rollouts_per_expansion: 3,
            seed: 0,
            top_k: 1,
            reward_mode: RewardMode::default(),
        }
    }
}

impl SearchParams {
    /// Defaults with the per-method `top_k` (1 for relational MCTS, 3 otherwise).
    pub fn for_method(method: Method) -> Self {
        Self {
            top_k: match method {
                Method::Rmcts => 1,
                Method::Mcts | Method::RandomWalk => 3,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RetrieveError> {
        let bad = |m: &str| Err(RetrieveError::InvalidParams(m.into()));
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be >= 1");
        }
        if self.top_k == 0 {
            return bad("top_k must be >= 1");
        }
        if self.rollouts_per_expansion == 0 {
            return bad("rollouts_per_expansion must be >= 1");
        }
        if !(self.uct_c >= 0.0 && self.uct_c.is_finite()) {
            return bad("uct_c must be a non-negative finite number");
        }
        Ok(())
    }
}

/// Scores a (partial) path given in level order, chain node before sibling.
pub trait PathScorer {
    fn score(&self, ttg: &TextualTripleGraph, path: &[NodeId]) -> Result<f64, RetrieveError>;
}

/// Query/path similarity through an [`Embedder`].
pub struct EmbeddingScorer<'a> {
    embedder: &'a Embedder,
    query: Arc<Embedding>,
    mode: RewardMode,
}

impl<'a> EmbeddingScorer<'a> {
    pub fn new(embedder: &'a Embedder, query: &str, mode: RewardMode) -> Result<Self, RetrieveError> {
        Ok(Self {
            embedder,
            query: embedder.embed_query(query)?,
            mode,
        })
    }
}

impl PathScorer for EmbeddingScorer<'_> {
    fn score(&self, ttg: &TextualTripleGraph, path: &[NodeId]) -> Result<f64, RetrieveError> {
        let nodes: Vec<_> = path.iter().map(|&n| ttg.node(n)).collect();
        Ok(self.embedder.path_reward(&self.query, &nodes, self.mode)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathNode {
    pub node_id: NodeId,
    pub triple: Triple,
}

/// A constraint branch: a sibling triple taken at hop `depth` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub depth: usize,
    pub node: PathNode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievedPath {
    /// Connected chain starting next to the topic entity.
    pub chain: Vec<PathNode>,
    pub branches: Vec<Branch>,
    pub score: f64,
    /// Entity reached by the last chain hop, unless it is the topic itself.
    pub terminal_entities: BTreeSet<String>,
    pub hop_count: usize,
}

impl RetrievedPath {
    /// Builds a path from a search state.
    ///
    /// When a level holds two triples, the one the next hop actually
    /// connects to is the chain node and the other becomes the branch.
    pub fn from_state(ttg: &TextualTripleGraph, topic: &str, state: &PathState, score: f64) -> Self {
        let mut levels: Vec<(NodeId, Option<NodeId>)> =
            state.levels().iter().map(|l| (l.chain, l.sibling)).collect();
        for i in 1..levels.len() {
            let current = levels[i].0;
            let (prev_chain, prev_sibling) = levels[i - 1];
            if let Some(sib) = prev_sibling {
                if !ttg.neighbors(current).contains(&prev_chain) && ttg.neighbors(current).contains(&sib) {
                    levels[i - 1] = (sib, Some(prev_chain));
                }
            }
        }

        let chain_ids: Vec<NodeId> = levels.iter().map(|l| l.0).collect();
        let exit = chain_exit(ttg, topic, &chain_ids);
        let terminal_entities = exit.into_iter().filter(|e| e != topic).collect();

        let node = |id: NodeId| PathNode {
            node_id: id,
            triple: ttg.node(id).triple.clone(),
        };
        RetrievedPath {
            chain: chain_ids.iter().map(|&id| node(id)).collect(),
            branches: levels
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.1.map(|sib| Branch { depth: i + 1, node: node(sib) }))
                .collect(),
            score,
            terminal_entities,
            hop_count: chain_ids.len(),
        }
    }

    /// Chain and branch node ids.
    pub fn node_ids(&self) -> Vec<NodeId> {
        self.chain
            .iter()
            .map(|n| n.node_id)
            .chain(self.branches.iter().map(|b| b.node.node_id))
            .collect()
    }
}

/// Walks the chain from the topic and returns the entity left by the last
/// hop: each hop is entered through an entity shared with the previous one
/// and exits through its other entity.
fn chain_exit(ttg: &TextualTripleGraph, topic: &str, chain: &[NodeId]) -> Option<String> {
    let mut entry: Option<String> = None;
    let mut exit: Option<String> = None;
    for (i, &id) in chain.iter().enumerate() {
        let triple = &ttg.node(id).triple;
        let enter = if i == 0 {
            if triple.contains(topic) {
                topic.to_string()
            } else {
                triple.head.clone()
            }
        } else {
            let prev_exit = exit.clone().unwrap_or_default();
            let prev_entry = entry.clone().unwrap_or_default();
            if triple.contains(&prev_exit) {
                prev_exit
            } else if triple.contains(&prev_entry) {
                prev_entry
            } else {
                let prev = &ttg.node(chain[i - 1]).triple;
                if triple.contains(&prev.head) {
                    prev.head.clone()
                } else {
                    prev.tail.clone()
                }
            }
        };
        exit = Some(triple.other(&enter).unwrap_or(&triple.tail).to_string());
        entry = Some(enter);
    }
    exit
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub path: RetrievedPath,
    /// Ended with STOP before reaching the depth limit. Only relational
    /// MCTS produces this.
    pub stopped_early: bool,
}

/// Terminal entities of the trajectories, rank order kept, duplicates dropped.
pub fn extract_answers(trajectories: &[Trajectory], topic: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut answers = Vec::new();
    for t in trajectories {
        for e in &t.path.terminal_entities {
            if e != topic && seen.insert(e.clone()) {
                answers.push(e.clone());
            }
        }
    }
    answers
}

/// Runs `method` for one query with the embedding reward.
pub fn retrieve(
    method: Method,
    ttg: &TextualTripleGraph,
    topic: &str,
    query: &str,
    embedder: &Embedder,
    params: &SearchParams,
) -> Result<Vec<Trajectory>, RetrieveError> {
    match method {
        Method::RandomWalk => random_walk_retrieve(ttg, topic, query, embedder, params),
        Method::Mcts => mcts_retrieve(ttg, topic, query, embedder, params),
        Method::Rmcts => rmcts_retrieve(ttg, topic, query, embedder, params),
    }
}

pub(crate) fn check_topic(ttg: &TextualTripleGraph, topic: &str) -> Result<(), RetrieveError> {
    match ttg.entity_index().get(topic) {
        None => Err(RetrieveError::UnknownTopic(topic.to_string())),
        Some(nodes) if nodes.is_empty() => Err(RetrieveError::NoCandidates(topic.to_string())),
        Some(_) => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tkg::{build_ttg, load_tkg};

    fn ttg(triples: &str) -> TextualTripleGraph {
        build_ttg(&load_tkg(triples.as_bytes(), "".as_bytes()).unwrap())
    }

    fn path_of(ttg: &TextualTripleGraph, topic: &str, actions: &[Action]) -> RetrievedPath {
        let mut state = PathState::new();
        for &a in actions {
            let exp = expand_candidates(ttg, topic, &state, SearchMode::Rmcts, 3);
            assert!(exp.actions.contains(&a), "{a:?} not offered");
            state = state.apply(a, &exp.extend);
        }
        RetrievedPath::from_state(ttg, topic, &state, 0.0)
    }

    fn traj(path: RetrievedPath) -> Trajectory {
        Trajectory { path, stopped_early: false }
    }

    #[test]
    fn answers_follow_the_chain() {
        let g = ttg("A\tr1\tB\nB\tr2\tC\n");
        let p = path_of(&g, "A", &[Action::Extend(0), Action::Extend(1)]);
        assert_eq!(extract_answers(&[traj(p.clone())], "A"), vec!["C"]);
        assert_eq!(extract_answers(&[traj(p.clone()), traj(p)], "A"), vec!["C"]);
        let single = path_of(&g, "A", &[Action::Extend(0)]);
        assert_eq!(extract_answers(&[traj(single)], "A"), vec!["B"]);
    }

    #[test]
    fn reversed_triple_direction_still_exits_far_side() {
        let g = ttg("B\tr1\tA\nC\tr2\tB\n");
        let p = path_of(&g, "A", &[Action::Extend(0), Action::Extend(1)]);
        assert_eq!(p.terminal_entities, BTreeSet::from(["C".to_string()]));
    }

    #[test]
    fn branch_swaps_to_keep_chain_connected() {
        // topic T: t0=(T,r1,M), t1=(T,rc,C); next hop t2=(C,r2,X) hangs off the sibling
        let g = ttg("T\tr1\tM\nT\trc\tC\nC\tr2\tX\n");
        let p = path_of(&g, "T", &[Action::Extend(0), Action::Sibling(1), Action::Extend(2)]);
        assert_eq!(p.chain.iter().map(|n| n.node_id).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(p.branches.len(), 1);
        assert_eq!(p.branches[0].depth, 1);
        assert_eq!(p.branches[0].node.node_id, 0);
        assert_eq!(p.hop_count, 2);
        assert_eq!(p.terminal_entities, BTreeSet::from(["X".to_string()]));
    }

    #[test]
    fn topic_never_reported_as_answer() {
        let g = ttg("T\tr\tX\nX\ts\tT\n");
        let p = path_of(&g, "T", &[Action::Extend(0)]);
        assert_eq!(extract_answers(&[traj(p)], "T"), vec!["X"]);
        // a self-relation on the topic leads nowhere new
        let g = ttg("T\tr\tT\n");
        let p = path_of(&g, "T", &[Action::Extend(0)]);
        assert!(p.terminal_entities.is_empty());
    }

    #[test]
    fn params_validation() {
        assert!(SearchParams::default().validate().is_ok());
        let p = SearchParams { iterations: 0, ..Default::default() };
        assert!(matches!(p.validate(), Err(RetrieveError::InvalidParams(_))));
        let p = SearchParams { uct_c: -1.0, ..Default::default() };
        assert!(p.validate().is_err());
        assert_eq!(SearchParams::for_method(Method::Rmcts).top_k, 1);
        assert_eq!(SearchParams::for_method(Method::Mcts).top_k, 3);
        assert_eq!(SearchParams::default().iterations, 5000);
        assert_eq!(SearchParams::default().max_depth, 3);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::RandomWalk, Method::Mcts, Method::Rmcts] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("beam".parse::<Method>().is_err());
    }
}

//! Monte Carlo tree search over partial paths, in plain and relational mode.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::state::{expand_candidates, Action, PathKey, PathState, SearchMode};
use super::tree::SearchTree;
use super::{check_topic, EmbeddingScorer, PathScorer, RetrieveError, RetrievedPath, SearchParams, Trajectory};
use crate::embed::Embedder;
use crate::tkg::{NodeId, TextualTripleGraph};

/// Trajectories plus the final tree, kept for inspection.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub trajectories: Vec<Trajectory>,
    pub tree: SearchTree,
}

/// Memoizes path rewards for the lifetime of one search.
struct MemoScorer<'a> {
    inner: &'a dyn PathScorer,
    cache: RefCell<HashMap<PathKey, f64>>,
}

impl PathScorer for MemoScorer<'_> {
    fn score(&self, ttg: &TextualTripleGraph, path: &[NodeId]) -> Result<f64, RetrieveError> {
        if let Some(&hit) = self.cache.borrow().get(path) {
            return Ok(hit);
        }
        let value = self.inner.score(ttg, path)?;
        self.cache.borrow_mut().insert(PathKey::from_slice(path), value);
        Ok(value)
    }
}

fn state_reward(ttg: &TextualTripleGraph, scorer: &dyn PathScorer, state: &PathState) -> Result<f64, RetrieveError> {
    let key = state.key();
    if key.is_empty() {
        return Ok(0.0);
    }
    scorer.score(ttg, &key)
}

/// One uniformly random continuation of `state` to a terminal state,
/// returning the reward of the completed path. STOP, when offered, is one
/// choice among the candidates.
pub fn simulate_rollout<R: Rng>(
    ttg: &TextualTripleGraph,
    topic: &str,
    state: &PathState,
    mode: SearchMode,
    params: &SearchParams,
    scorer: &dyn PathScorer,
    rng: &mut R,
) -> Result<f64, RetrieveError> {
    let mut current = state.clone();
    loop {
        let exp = expand_candidates(ttg, topic, &current, mode, params.max_depth);
        if exp.is_terminal() {
            break;
        }
        let action = exp.actions[rng.random_range(0..exp.actions.len())];
        current = current.apply(action, &exp.extend);
        if action == Action::Stop {
            break;
        }
    }
    state_reward(ttg, scorer, &current)
}

struct Searcher<'a> {
    ttg: &'a TextualTripleGraph,
    topic: &'a str,
    scorer: MemoScorer<'a>,
    params: &'a SearchParams,
    mode: SearchMode,
}

impl Searcher<'_> {
    fn reward(&self, state: &PathState) -> Result<f64, RetrieveError> {
        state_reward(self.ttg, &self.scorer, state)
    }

    fn run(&self, rng: &mut ChaCha8Rng) -> Result<SearchTree, RetrieveError> {
        let mut tree = SearchTree::new();
        let root_state = PathState::new();
        for _ in 0..self.params.iterations {
            let mut idx = SearchTree::ROOT;
            let mut state = root_state.clone();
            loop {
                if tree.node(idx).terminal {
                    break;
                }
                if !tree.node(idx).expanded {
                    let exp = expand_candidates(self.ttg, self.topic, &state, self.mode, self.params.max_depth);
                    tree.expand(idx, &exp.actions, exp.extend);
                    if tree.node(idx).terminal {
                        break;
                    }
                }
                let child = tree
                    .select_child(idx, self.params.uct_c, rng)
                    .expect("expanded non-terminal node has children");
                let extend = tree.node(idx).extend.clone().expect("expanded");
                state = state.apply(tree.node(child).action, &extend);
                idx = child;
                if tree.node(child).visits == 0 {
                    break;
                }
            }

            let reward = if state.stopped() || tree.node(idx).terminal {
                if state.stopped() {
                    tree.mark_terminal(idx);
                }
                self.reward(&state)?
            } else {
                let mut total = 0.0;
                for _ in 0..self.params.rollouts_per_expansion {
                    total += simulate_rollout(self.ttg, self.topic, &state, self.mode, self.params, &self.scorer, rng)?;
                }
                total / self.params.rollouts_per_expansion as f64
            };
            tree.backpropagate(idx, reward);
        }
        Ok(tree)
    }

    /// Visited child with the best mean reward; ties go to more visits, then
    /// to the lower action key.
    fn best_visited_child(tree: &SearchTree, idx: usize) -> Option<usize> {
        tree.node(idx)
            .children
            .iter()
            .copied()
            .filter(|&ch| tree.node(ch).visits > 0)
            .max_by(|&a, &b| compare_children(tree, a, b))
    }

    /// Greedy descent by mean reward, finished by a greedy one-step
    /// lookahead once the visited part of the tree runs out.
    fn descend(&self, tree: &SearchTree, mut idx: usize, mut state: PathState) -> Result<PathState, RetrieveError> {
        while let Some(child) = Self::best_visited_child(tree, idx) {
            let extend = tree.node(idx).extend.clone().expect("node with children is expanded");
            state = state.apply(tree.node(child).action, &extend);
            idx = child;
        }
        loop {
            let exp = expand_candidates(self.ttg, self.topic, &state, self.mode, self.params.max_depth);
            if exp.is_terminal() {
                break;
            }
            let mut best: Option<(f64, Action)> = None;
            for &action in &exp.actions {
                let value = if action == Action::Stop {
                    self.reward(&state)?
                } else {
                    self.reward(&state.apply(action, &exp.extend))?
                };
                if best.is_none_or(|(v, _)| value > v) {
                    best = Some((value, action));
                }
            }
            let (_, action) = best.expect("non-terminal expansion has actions");
            state = state.apply(action, &exp.extend);
            if action == Action::Stop {
                break;
            }
        }
        Ok(state)
    }

    fn extract(&self, tree: &SearchTree) -> Result<Vec<Trajectory>, RetrieveError> {
        let root = tree.root();
        let mut ranked: Vec<usize> = root
            .children
            .iter()
            .copied()
            .filter(|&ch| tree.node(ch).visits > 0)
            .collect();
        ranked.sort_by(|&a, &b| compare_children(tree, b, a));
        let root_extend = root.extend.clone().unwrap_or_else(|| std::sync::Arc::from(Vec::new()));

        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for child in ranked {
            if out.len() == self.params.top_k {
                break;
            }
            let start = PathState::new().apply(tree.node(child).action, &root_extend);
            let state = self.descend(tree, child, start)?;
            if !seen.insert(state.key()) {
                continue;
            }
            let score = self.reward(&state)?;
            out.push(Trajectory {
                path: RetrievedPath::from_state(self.ttg, self.topic, &state, score),
                stopped_early: state.stopped() && state.depth() < self.params.max_depth,
            });
        }
        Ok(out)
    }
}

fn compare_children(tree: &SearchTree, a: usize, b: usize) -> Ordering {
    let (na, nb) = (tree.node(a), tree.node(b));
    let (ma, mb) = (na.mean_reward().unwrap_or(f64::NEG_INFINITY), nb.mean_reward().unwrap_or(f64::NEG_INFINITY));
    ma.partial_cmp(&mb)
        .unwrap_or(Ordering::Equal)
        .then(na.visits.cmp(&nb.visits))
        // lower action key ranks higher
        .then(nb.action.order_key().cmp(&na.action.order_key()))
}

/// Runs a full search with an arbitrary scorer and returns the tree too.
pub fn search(
    ttg: &TextualTripleGraph,
    topic: &str,
    scorer: &dyn PathScorer,
    params: &SearchParams,
    mode: SearchMode,
) -> Result<SearchOutcome, RetrieveError> {
    params.validate()?;
    check_topic(ttg, topic)?;
    let searcher = Searcher {
        ttg,
        topic,
        scorer: MemoScorer {
            inner: scorer,
            cache: RefCell::new(HashMap::new()),
        },
        params,
        mode,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let tree = searcher.run(&mut rng)?;
    let trajectories = searcher.extract(&tree)?;
    Ok(SearchOutcome { trajectories, tree })
}

/// Plain MCTS: every trajectory runs to the depth limit or a dead end.
pub fn mcts_retrieve(
    ttg: &TextualTripleGraph,
    topic: &str,
    query: &str,
    embedder: &Embedder,
    params: &SearchParams,
) -> Result<Vec<Trajectory>, RetrieveError> {
    check_topic(ttg, topic)?;
    let scorer = EmbeddingScorer::new(embedder, query, params.reward_mode)?;
    Ok(search(ttg, topic, &scorer, params, SearchMode::Mcts)?.trajectories)
}

/// Relational MCTS: trajectories may stop early and carry one sibling branch.
pub fn rmcts_retrieve(
    ttg: &TextualTripleGraph,
    topic: &str,
    query: &str,
    embedder: &Embedder,
    params: &SearchParams,
) -> Result<Vec<Trajectory>, RetrieveError> {
    check_topic(ttg, topic)?;
    let scorer = EmbeddingScorer::new(embedder, query, params.reward_mode)?;
    Ok(search(ttg, topic, &scorer, params, SearchMode::Rmcts)?.trajectories)
}

//! Partial paths and the moves available from them.
//!
//! A path is a stack of levels. Each level holds the triple chosen at that
//! hop plus, in relational mode, at most one sibling taken from the same
//! candidate set (a constraint branch). The candidate set a level was drawn
//! from is its *frontier*; next-hop candidates are neighbours of the whole
//! last level that sit on no earlier frontier, which keeps siblings of a
//! node from being offered again as its children.

use std::collections::BTreeSet;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::tkg::{NodeId, TextualTripleGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchMode {
    /// Plain MCTS: extend the chain until the depth limit or a dead end.
    Mcts,
    /// Relational MCTS: additionally offers STOP and sibling branches.
    Rmcts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Root,
    Extend(NodeId),
    Sibling(NodeId),
    Stop,
}

impl Action {
    /// Deterministic ordering used to break ties.
    pub fn order_key(&self) -> (u8, NodeId) {
        match *self {
            Action::Root => (0, 0),
            Action::Extend(n) => (1, n),
            Action::Sibling(n) => (2, n),
            Action::Stop => (3, 0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Level {
    pub chain: NodeId,
    pub sibling: Option<NodeId>,
    frontier: Arc<[NodeId]>,
}

impl Level {
    /// Sorted candidate set this level's chain node was drawn from.
    pub fn frontier(&self) -> &[NodeId] {
        &self.frontier
    }
}

/// Node ids of a path in level order, chain node before sibling.
pub type PathKey = SmallVec<[NodeId; 8]>;

#[derive(Debug, Clone, Default)]
pub struct PathState {
    levels: Vec<Level>,
    stopped: bool,
}

impl PathState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Number of hops taken so far.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn sibling_used(&self) -> bool {
        self.levels.iter().any(|l| l.sibling.is_some())
    }

    pub fn key(&self) -> PathKey {
        let mut key = PathKey::new();
        for level in &self.levels {
            key.push(level.chain);
            key.extend(level.sibling);
        }
        key
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.levels
            .iter()
            .any(|l| l.chain == node || l.sibling == Some(node))
    }

    fn on_frontier(&self, node: NodeId) -> bool {
        self.levels.iter().any(|l| l.frontier.binary_search(&node).is_ok())
    }

    /// Applies `action`. `extend_frontier` must be the `extend` set of the
    /// expansion that produced the action.
    pub fn apply(&self, action: Action, extend_frontier: &Arc<[NodeId]>) -> PathState {
        let mut next = self.clone();
        match action {
            Action::Root => {}
            Action::Extend(n) => next.levels.push(Level {
                chain: n,
                sibling: None,
                frontier: extend_frontier.clone(),
            }),
            Action::Sibling(n) => {
                let last = next.levels.last_mut().expect("sibling needs a level");
                debug_assert!(last.sibling.is_none());
                last.sibling = Some(n);
            }
            Action::Stop => next.stopped = true,
        }
        next
    }
}

/// Moves available from a state, plus the next-hop set that becomes the
/// frontier of any `Extend` child.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub extend: Arc<[NodeId]>,
    pub actions: Vec<Action>,
}

impl Expansion {
    pub fn is_terminal(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Candidate moves from `state`.
///
/// * depth 0: the triples incident to `topic`.
/// * deeper: neighbours of every node in the last level, minus nodes already
///   on the path or on any earlier frontier; nothing once `max_depth` hops
///   have been taken.
/// * relational mode, depth ≥ 1: also `Stop`, and, while the path carries no
///   sibling branch yet, the untaken members of the last level's frontier.
pub fn expand_candidates(
    ttg: &TextualTripleGraph,
    topic: &str,
    state: &PathState,
    mode: SearchMode,
    max_depth: usize,
) -> Expansion {
    if state.stopped {
        return Expansion {
            extend: Arc::from(Vec::new()),
            actions: Vec::new(),
        };
    }
    let depth = state.depth();
    let extend: Vec<NodeId> = if depth >= max_depth {
        Vec::new()
    } else if depth == 0 {
        ttg.incident_nodes(topic).into_iter().collect()
    } else {
        let last = state.levels.last().expect("depth > 0");
        let mut next = BTreeSet::new();
        for member in std::iter::once(last.chain).chain(last.sibling) {
            for &n in ttg.neighbors(member) {
                if !state.contains(n) && !state.on_frontier(n) {
                    next.insert(n);
                }
            }
        }
        next.into_iter().collect()
    };

    let mut actions: Vec<Action> = extend.iter().map(|&n| Action::Extend(n)).collect();
    if mode == SearchMode::Rmcts && depth >= 1 {
        if !state.sibling_used() {
            let last = state.levels.last().expect("depth > 0");
            actions.extend(
                last.frontier
                    .iter()
                    .filter(|&&n| !state.contains(n))
                    .map(|&n| Action::Sibling(n)),
            );
        }
        actions.push(Action::Stop);
    }
    Expansion {
        extend: Arc::from(extend),
        actions,
    }
}

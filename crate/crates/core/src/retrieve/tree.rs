//! Search-tree statistics: visit counts, cumulative rewards, UCT selection
//! and back-propagation.

use std::sync::Arc;

use rand::Rng;

use super::state::Action;
use crate::tkg::NodeId;

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub action: Action,
    pub parent: Option<usize>,
    /// Hops from the root. Sibling and STOP children keep their parent's depth.
    pub depth: usize,
    pub visits: u64,
    pub total_reward: f64,
    pub children: Vec<usize>,
    pub expanded: bool,
    pub terminal: bool,
    pub(crate) extend: Option<Arc<[NodeId]>>,
}

impl SearchNode {
    fn new(action: Action, parent: Option<usize>, depth: usize) -> Self {
        Self {
            action,
            parent,
            depth,
            visits: 0,
            total_reward: 0.0,
            children: Vec::new(),
            expanded: false,
            terminal: false,
            extend: None,
        }
    }

    /// `W / N`, or `None` before the first visit.
    pub fn mean_reward(&self) -> Option<f64> {
        (self.visits > 0).then(|| self.total_reward / self.visits as f64)
    }
}

/// Arena-allocated search tree. Index 0 is the root.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

impl Default for SearchTree {
    fn default() -> Self {
        Self::new()
    }
}

impl SearchTree {
    pub const ROOT: usize = 0;

    pub fn new() -> Self {
        Self {
            nodes: vec![SearchNode::new(Action::Root, None, 0)],
        }
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[Self::ROOT]
    }

    pub fn node(&self, idx: usize) -> &SearchNode {
        &self.nodes[idx]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &SearchNode)> {
        self.nodes.iter().enumerate()
    }

    /// Creates one child per action and marks `idx` expanded (terminal when
    /// there are no actions).
    pub fn expand(&mut self, idx: usize, actions: &[Action], extend: Arc<[NodeId]>) {
        let depth = self.nodes[idx].depth;
        let mut children = Vec::with_capacity(actions.len());
        for &action in actions {
            let child_depth = match action {
                Action::Extend(_) => depth + 1,
                _ => depth,
            };
            children.push(self.nodes.len());
            self.nodes.push(SearchNode::new(action, Some(idx), child_depth));
        }
        let node = &mut self.nodes[idx];
        node.children = children;
        node.expanded = true;
        node.terminal = actions.is_empty();
        node.extend = Some(extend);
    }

    pub(crate) fn mark_terminal(&mut self, idx: usize) {
        self.nodes[idx].terminal = true;
        self.nodes[idx].expanded = true;
    }

    /// Adds one visit and `reward` to `leaf` and every ancestor up to the root.
    pub fn backpropagate(&mut self, leaf: usize, reward: f64) {
        debug_assert!(reward.is_finite());
        let mut cursor = Some(leaf);
        while let Some(idx) = cursor {
            let node = &mut self.nodes[idx];
            node.visits += 1;
            node.total_reward += reward;
            cursor = node.parent;
        }
    }

    /// UCT child choice. Unvisited children come first (picked uniformly
    /// among themselves); otherwise the highest score wins, earliest child
    /// on ties.
    pub fn select_child<R: Rng>(&self, idx: usize, c: f64, rng: &mut R) -> Option<usize> {
        let node = &self.nodes[idx];
        if node.children.is_empty() {
            return None;
        }
        let unvisited: Vec<usize> = node
            .children
            .iter()
            .copied()
            .filter(|&ch| self.nodes[ch].visits == 0)
            .collect();
        if !unvisited.is_empty() {
            return Some(unvisited[rng.random_range(0..unvisited.len())]);
        }
        let parent_visits = node.visits.max(1);
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for &ch in &node.children {
            let score = uct_score(&self.nodes[ch], parent_visits, c);
            if score > best_score {
                best_score = score;
                best = Some(ch);
            }
        }
        best
    }
}

/// `W/N + c * sqrt(ln(parent_visits) / N)`; `+inf` for an unvisited child.
pub fn uct_score(child: &SearchNode, parent_visits: u64, c: f64) -> f64 {
    if child.visits == 0 {
        return f64::INFINITY;
    }
    uct_from_log(child.total_reward, child.visits, (parent_visits as f64).ln(), c)
}

/// The UCT formula with the parent's log-visit count supplied directly.
pub fn uct_from_log(total_reward: f64, visits: u64, ln_parent_visits: f64, c: f64) -> f64 {
    let n = visits as f64;
    let exploit = total_reward / n;
    if c == 0.0 {
        return exploit;
    }
    exploit + c * (ln_parent_visits / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stats(visits: u64, total_reward: f64) -> SearchNode {
        SearchNode {
            visits,
            total_reward,
            ..SearchNode::new(Action::Stop, Some(0), 1)
        }
    }

    #[test]
    fn unvisited_scores_infinite() {
        assert_eq!(uct_score(&stats(0, 0.0), 10, 1.0), f64::INFINITY);
    }

    #[test]
    fn hand_computed_uct() {
        // W=2, N=4, ln(parent)=1, c=1: 0.5 + sqrt(1/4) = 1.0
        assert!((uct_from_log(2.0, 4, 1.0, 1.0) - 1.0).abs() < 1e-12);
        let exact = 0.5 + (3f64.ln() / 4.0).sqrt();
        assert!((uct_score(&stats(4, 2.0), 3, 1.0) - exact).abs() < 1e-12);
    }

    #[test]
    fn zero_exploration_is_mean_reward() {
        assert_eq!(uct_score(&stats(7, 3.5), 100, 0.0), 0.5);
    }

    #[test]
    fn backpropagation_touches_every_ancestor() {
        let mut tree = SearchTree::new();
        let empty: Arc<[NodeId]> = Arc::from(Vec::new());
        tree.expand(0, &[Action::Extend(1)], empty.clone());
        tree.expand(1, &[Action::Extend(2)], empty.clone());
        tree.expand(2, &[Action::Extend(3)], empty.clone());
        tree.backpropagate(3, 0.8);
        let touched: Vec<usize> = tree.iter().filter(|(_, n)| n.visits == 1).map(|(i, _)| i).collect();
        assert_eq!(touched, vec![0, 1, 2, 3]);
        assert_eq!(tree.node(3).depth, 3);
        assert!((tree.root().total_reward - 0.8).abs() < 1e-12);
    }

    #[test]
    fn unvisited_children_selected_before_any_revisit() {
        let mut tree = SearchTree::new();
        let actions = [Action::Extend(0), Action::Extend(1), Action::Extend(2)];
        tree.expand(0, &actions, Arc::from(vec![0, 1, 2]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = Vec::new();
        for _ in 0..3 {
            let ch = tree.select_child(0, 1.4, &mut rng).unwrap();
            assert_eq!(tree.node(ch).visits, 0);
            seen.push(ch);
            let reward = match tree.node(ch).action {
                Action::Extend(0) => 0.9,
                Action::Extend(1) => 0.1,
                _ => 0.5,
            };
            tree.backpropagate(ch, reward);
        }
        seen.sort();
        assert_eq!(seen, vec![1, 2, 3]);
        // with c = 0 the best mean wins
        let best = tree.select_child(0, 0.0, &mut rng).unwrap();
        assert_eq!(tree.node(best).action, Action::Extend(0));
    }

    #[test]
    fn sibling_and_stop_keep_depth() {
        let mut tree = SearchTree::new();
        tree.expand(0, &[Action::Extend(4)], Arc::from(vec![4]));
        tree.expand(1, &[Action::Extend(5), Action::Sibling(6), Action::Stop], Arc::from(vec![5]));
        assert_eq!(tree.node(2).depth, 2);
        assert_eq!(tree.node(3).depth, 1);
        assert_eq!(tree.node(4).depth, 1);
    }
}

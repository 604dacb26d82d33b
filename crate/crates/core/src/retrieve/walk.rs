//! Random-walk baseline.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::state::{expand_candidates, PathState, SearchMode};
use super::{check_topic, EmbeddingScorer, PathScorer, RetrieveError, RetrievedPath, SearchParams, Trajectory};
use crate::embed::Embedder;
use crate::tkg::{NodeId, TextualTripleGraph};

/// `params.iterations` independent uniform walks of at most `max_depth`
/// hops from the topic; the `top_k` distinct walks with the best reward
/// are returned. Walks never revisit a triple.
pub fn random_walk(
    ttg: &TextualTripleGraph,
    topic: &str,
    scorer: &dyn PathScorer,
    params: &SearchParams,
) -> Result<Vec<Trajectory>, RetrieveError> {
    params.validate()?;
    check_topic(ttg, topic)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut walks: BTreeMap<Vec<NodeId>, PathState> = BTreeMap::new();
    for _ in 0..params.iterations {
        let mut state = PathState::new();
        loop {
            let exp = expand_candidates(ttg, topic, &state, SearchMode::Mcts, params.max_depth);
            if exp.is_terminal() {
                break;
            }
            let action = exp.actions[rng.random_range(0..exp.actions.len())];
            state = state.apply(action, &exp.extend);
        }
        walks.entry(state.key().to_vec()).or_insert(state);
    }

    let mut scored = Vec::with_capacity(walks.len());
    for (key, state) in walks {
        let score = scorer.score(ttg, &key)?;
        scored.push((score, key, state));
    }
    // best score first; ties by node sequence
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok(scored
        .into_iter()
        .take(params.top_k)
        .map(|(score, _, state)| Trajectory {
            path: RetrievedPath::from_state(ttg, topic, &state, score),
            stopped_early: false,
        })
        .collect())
}

pub fn random_walk_retrieve(
    ttg: &TextualTripleGraph,
    topic: &str,
    query: &str,
    embedder: &Embedder,
    params: &SearchParams,
) -> Result<Vec<Trajectory>, RetrieveError> {
    check_topic(ttg, topic)?;
    let scorer = EmbeddingScorer::new(embedder, query, params.reward_mode)?;
    random_walk(ttg, topic, &scorer, params)
}

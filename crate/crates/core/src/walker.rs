//! Exact p-hop random-walk scores.
//!
//! A walk starts at a user node and alternates sides; after an odd number of
//! hops it sits on an item. Instead of sampling walks we push probability
//! mass through the graph, which yields the exact landing distribution.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::InteractionGraph;
use crate::ids::{by_score_then_id, ItemIx, ScoredItem, UserIx};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WalkError {
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("hop count must be odd and positive, got {0}")]
    InvalidHops(u32),
}

/// Landing probabilities over items for one user and hop count.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkScores {
    pub user: UserIx,
    pub hops: u32,
    // sorted by item index, zero entries omitted
    scores: Vec<(ItemIx, f64)>,
}

impl WalkScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemIx, f64)> + '_ {
        self.scores.iter().copied()
    }

    pub fn get(&self, item: ItemIx) -> Option<f64> {
        self.scores
            .binary_search_by_key(&item, |e| e.0)
            .ok()
            .map(|i| self.scores[i].1)
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().map(|e| e.1).sum()
    }

    pub fn to_id_map(&self, graph: &InteractionGraph) -> BTreeMap<String, f64> {
        self.iter()
            .map(|(i, s)| (graph.item_id(i).into(), s))
            .collect()
    }

    /// Scored ids, best first.
    pub fn scored_items(&self, graph: &InteractionGraph) -> Vec<ScoredItem> {
        let mut out: Vec<ScoredItem> = self
            .iter()
            .map(|(i, s)| ScoredItem::new(graph.item_id(i), s))
            .collect();
        out.sort_by(by_score_then_id);
        out
    }

    /// Drops the given items. Remaining scores keep their values.
    pub fn without(mut self, items: &[ItemIx]) -> Self {
        let mut drop = items.to_vec();
        drop.sort_unstable();
        self.scores.retain(|(i, _)| drop.binary_search(i).is_err());
        self
    }
}

fn check_hops(hops: u32) -> Result<(), WalkError> {
    if hops % 2 == 1 {
        Ok(())
    } else {
        Err(WalkError::InvalidHops(hops))
    }
}

fn resolve_user(graph: &InteractionGraph, user: &str) -> Result<UserIx, WalkError> {
    graph
        .user_ix(user)
        .ok_or_else(|| WalkError::UnknownUser(user.into()))
}

/// Exact landing distribution of a uniform walk of `hops` steps from `user`.
pub fn walk_scores(graph: &InteractionGraph, user: &str, hops: u32) -> Result<WalkScores, WalkError> {
    walk_scores_with(graph, user, hops, &mut WalkScratch::new())
}

/// [`walk_scores`] reusing `scratch` between calls.
pub fn walk_scores_with(
    graph: &InteractionGraph,
    user: &str,
    hops: u32,
    scratch: &mut WalkScratch,
) -> Result<WalkScores, WalkError> {
    check_hops(hops)?;
    let u = resolve_user(graph, user)?;
    Ok(propagate(graph, u, hops, scratch))
}

/// Buffers reused across walks. Each walk otherwise allocates two dense
/// arrays the size of the graph.
#[derive(Debug, Clone, Default)]
pub struct WalkScratch {
    user_mass: Vec<f64>,
    item_mass: Vec<f64>,
}

impl WalkScratch {
    pub fn new() -> Self {
        Self::default()
    }

    // all entries are zero between walks
    fn fit(&mut self, graph: &InteractionGraph) {
        if self.user_mass.len() != graph.user_count() || self.item_mass.len() != graph.item_count() {
            self.user_mass = vec![0.0; graph.user_count()];
            self.item_mass = vec![0.0; graph.item_count()];
        }
    }
}

pub(crate) fn propagate(graph: &InteractionGraph, start: UserIx, hops: u32, scratch: &mut WalkScratch) -> WalkScores {
    // sparse frontiers over dense scratch, so a walk costs what it reaches
    scratch.fit(graph);
    let WalkScratch { user_mass, item_mass } = scratch;
    let mut users = vec![start.index()];
    user_mass[start.index()] = 1.0;
    let mut items: Vec<usize> = Vec::new();
    let mut remaining = hops;
    loop {
        for &u in &users {
            let mass = core::mem::take(&mut user_mass[u]);
            let adj = graph.user_items(UserIx(u as u32));
            let share = mass / adj.len() as f64;
            for &i in adj {
                if item_mass[i.index()] == 0.0 {
                    items.push(i.index());
                }
                item_mass[i.index()] += share;
            }
        }
        items.sort_unstable();
        remaining -= 1;
        if remaining == 0 {
            break;
        }
        users.clear();
        for &i in &items {
            let mass = core::mem::take(&mut item_mass[i]);
            let adj = graph.item_users(ItemIx(i as u32));
            let share = mass / adj.len() as f64;
            for &u in adj {
                if user_mass[u.index()] == 0.0 {
                    users.push(u.index());
                }
                user_mass[u.index()] += share;
            }
        }
        items.clear();
        users.sort_unstable();
        remaining -= 1;
    }
    // odd hops end on items, so only item entries need clearing
    let scores = items
        .into_iter()
        .map(|i| (ItemIx(i as u32), core::mem::take(&mut item_mass[i])))
        .filter(|(_, m)| *m > 0.0)
        .collect();
    WalkScores {
        user: start,
        hops,
        scores,
    }
}

/// Walk scores discounted by item popularity: each score is divided by
/// `degree^beta` and the result renormalized. `beta = 0` returns the plain
/// walk scores untouched.
pub fn rdw_scores(
    graph: &InteractionGraph,
    user: &str,
    hops: u32,
    beta: f64,
) -> Result<WalkScores, WalkError> {
    rdw_scores_with(graph, user, hops, beta, &mut WalkScratch::new())
}

/// [`rdw_scores`] reusing `scratch` between calls.
pub fn rdw_scores_with(
    graph: &InteractionGraph,
    user: &str,
    hops: u32,
    beta: f64,
    scratch: &mut WalkScratch,
) -> Result<WalkScores, WalkError> {
    let plain = walk_scores_with(graph, user, hops, scratch)?;
    Ok(popularity_discount(graph, plain, beta))
}

pub(crate) fn popularity_discount(graph: &InteractionGraph, mut ws: WalkScores, beta: f64) -> WalkScores {
    if beta == 0.0 {
        return ws;
    }
    for (i, s) in &mut ws.scores {
        *s /= libm::pow(graph.item_degree(*i) as f64, beta);
    }
    let total = ws.total();
    if total > 0.0 {
        for (_, s) in &mut ws.scores {
            *s /= total;
        }
    }
    ws
}

/// Removes the user's history items. Scores are not renormalized.
pub fn filter_history<'a, I>(scores: WalkScores, graph: &InteractionGraph, history: I) -> WalkScores
where
    I: IntoIterator<Item = &'a str>,
{
    let drop: Vec<ItemIx> = history.into_iter().filter_map(|id| graph.item_ix(id)).collect();
    scores.without(&drop)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> InteractionGraph {
        InteractionGraph::from_edges([("u1", "a"), ("u1", "b"), ("u2", "b"), ("u2", "c")])
    }

    fn as_map(g: &InteractionGraph, ws: &WalkScores) -> Vec<(String, f64)> {
        ws.to_id_map(g).into_iter().collect()
    }

    #[test]
    fn one_hop_is_uniform_over_neighbors() {
        let g = small();
        let ws = walk_scores(&g, "u1", 1).unwrap();
        assert_eq!(as_map(&g, &ws), [("a".into(), 0.5), ("b".into(), 0.5)]);
    }

    #[test]
    fn three_hops_matches_hand_oracle() {
        // u1 -> {a,b}; a -> u1; b -> {u1,u2}; u1 -> {a,b}, u2 -> {b,c}
        // P(u1)=0.5+0.25=0.75, P(u2)=0.25
        // a = 0.375, b = 0.375 + 0.125 = 0.5, c = 0.125
        let g = small();
        let ws = walk_scores(&g, "u1", 3).unwrap();
        let m = ws.to_id_map(&g);
        assert!((m["a"] - 0.375).abs() < 1e-12);
        assert!((m["b"] - 0.5).abs() < 1e-12);
        assert!((m["c"] - 0.125).abs() < 1e-12);
        assert!((ws.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let g = small();
        assert_eq!(walk_scores(&g, "u1", 2), Err(WalkError::InvalidHops(2)));
        assert_eq!(walk_scores(&g, "u1", 0), Err(WalkError::InvalidHops(0)));
        assert_eq!(
            walk_scores(&g, "nobody", 3),
            Err(WalkError::UnknownUser("nobody".into()))
        );
    }

    #[test]
    fn rdw_discounts_by_degree() {
        let g = small();
        let plain = walk_scores(&g, "u1", 3).unwrap();
        assert_eq!(rdw_scores(&g, "u1", 3, 0.0).unwrap(), plain);
        let m = rdw_scores(&g, "u1", 3, 1.0).unwrap().to_id_map(&g);
        assert!((m["a"] - 0.5).abs() < 1e-9);
        assert!((m["b"] - 1.0 / 3.0).abs() < 1e-9);
        assert!((m["c"] - 1.0 / 6.0).abs() < 1e-9);
        let steep = rdw_scores(&g, "u1", 3, 20.0).unwrap();
        let best = steep
            .iter()
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(i, _)| g.item_id(i))
            .unwrap();
        assert_eq!(best, "a");
    }

    #[test]
    fn history_filter_keeps_raw_scores() {
        let g = small();
        let ws = walk_scores(&g, "u1", 3).unwrap();
        let f = filter_history(ws.clone(), &g, ["b"]);
        assert_eq!(as_map(&g, &f), [("a".into(), 0.375), ("c".into(), 0.125)]);
        assert_eq!(filter_history(ws.clone(), &g, []), ws);
        assert!(filter_history(ws, &g, ["a", "b", "c"]).is_empty());
    }
}

//! Bipartite user/item click graph.
//!
//! Built once from behavior logs, optionally augmented so that articles nobody
//! has clicked yet become reachable, then shared read-only by every walk.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::ids::{ItemIx, UserIx};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("cold item {0:?} has no embedding")]
    ColdItemWithoutEmbedding(String),
    #[error("need {needed} warm items with embeddings, found {available}")]
    NotEnoughWarmItems { needed: usize, available: usize },
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One shown article and whether it was clicked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Impression {
    pub article_id: String,
    #[serde(serialize_with = "click_to_int", deserialize_with = "click_from_any")]
    pub clicked: bool,
}

fn click_to_int<S: Serializer>(clicked: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*clicked))
}

fn click_from_any<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Int(u8),
        Bool(bool),
    }
    match Flag::deserialize(d)? {
        Flag::Bool(b) => Ok(b),
        Flag::Int(0) => Ok(false),
        Flag::Int(1) => Ok(true),
        Flag::Int(n) => Err(serde::de::Error::custom(format!(
            "clicked must be 0 or 1, got {n}"
        ))),
    }
}

/// One user's reading history and impression log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorRecord {
    pub user_id: String,
    #[serde(default)]
    pub history: Vec<String>,
    #[serde(default)]
    pub impressions: Vec<Impression>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

impl BehaviorRecord {
    /// History items followed by clicked impressions.
    pub fn interactions(&self) -> impl Iterator<Item = &str> {
        self.history.iter().map(String::as_str).chain(
            self.impressions
                .iter()
                .filter(|i| i.clicked)
                .map(|i| i.article_id.as_str()),
        )
    }
}

/// Immutable bipartite graph with sorted adjacency on both sides.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionGraph {
    user_ids: Vec<String>,
    user_index: BTreeMap<String, UserIx>,
    item_ids: Vec<String>,
    item_index: BTreeMap<String, ItemIx>,
    user_items: Vec<Vec<ItemIx>>,
    item_users: Vec<Vec<UserIx>>,
}

impl InteractionGraph {
    pub fn user_count(&self) -> usize {
        self.user_ids.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.user_items.iter().map(Vec::len).sum()
    }

    pub fn user_ix(&self, id: &str) -> Option<UserIx> {
        self.user_index.get(id).copied()
    }

    pub fn item_ix(&self, id: &str) -> Option<ItemIx> {
        self.item_index.get(id).copied()
    }

    pub fn user_id(&self, u: UserIx) -> &str {
        &self.user_ids[u.index()]
    }

    pub fn item_id(&self, i: ItemIx) -> &str {
        &self.item_ids[i.index()]
    }

    pub fn user_items(&self, u: UserIx) -> &[ItemIx] {
        &self.user_items[u.index()]
    }

    pub fn item_users(&self, i: ItemIx) -> &[UserIx] {
        &self.item_users[i.index()]
    }

    pub fn user_degree(&self, u: UserIx) -> usize {
        self.user_items[u.index()].len()
    }

    pub fn item_degree(&self, i: ItemIx) -> usize {
        self.item_users[i.index()].len()
    }

    pub fn users(&self) -> impl Iterator<Item = UserIx> + '_ {
        (0..self.user_ids.len() as u32).map(UserIx)
    }

    pub fn items(&self) -> impl Iterator<Item = ItemIx> + '_ {
        (0..self.item_ids.len() as u32).map(ItemIx)
    }

    pub fn has_edge(&self, u: UserIx, i: ItemIx) -> bool {
        self.user_items[u.index()].binary_search(&i).is_ok()
    }

    fn add_user(&mut self, id: &str) -> UserIx {
        if let Some(&u) = self.user_index.get(id) {
            return u;
        }
        let u = UserIx(self.user_ids.len() as u32);
        self.user_ids.push(id.into());
        self.user_index.insert(id.into(), u);
        self.user_items.push(Vec::new());
        u
    }

    fn add_item(&mut self, id: &str) -> ItemIx {
        if let Some(&i) = self.item_index.get(id) {
            return i;
        }
        let i = ItemIx(self.item_ids.len() as u32);
        self.item_ids.push(id.into());
        self.item_index.insert(id.into(), i);
        self.item_users.push(Vec::new());
        i
    }

    // Callers must re-sort adjacency afterwards.
    fn push_edge(&mut self, u: UserIx, i: ItemIx) {
        self.user_items[u.index()].push(i);
        self.item_users[i.index()].push(u);
    }

    fn normalize(&mut self) {
        for adj in &mut self.user_items {
            adj.sort_unstable();
            adj.dedup();
        }
        for adj in &mut self.item_users {
            adj.sort_unstable();
            adj.dedup();
        }
    }

    /// Builds a graph from explicit edges. Node indices follow the sorted id
    /// order so the result does not depend on edge order.
    pub fn from_edges<'a, I>(edges: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let pairs: BTreeSet<(&str, &str)> = edges.into_iter().collect();
        let users: BTreeSet<&str> = pairs.iter().map(|p| p.0).collect();
        let items: BTreeSet<&str> = pairs.iter().map(|p| p.1).collect();
        let mut g = Self::default();
        for u in users {
            g.add_user(u);
        }
        for i in items {
            g.add_item(i);
        }
        for (u, i) in pairs {
            let (u, i) = (g.user_index[u], g.item_index[i]);
            g.push_edge(u, i);
        }
        g.normalize();
        g
    }

    /// One line per node: `U<TAB>user<TAB>item...` then `I<TAB>item<TAB>user...`.
    /// Node order is preserved, so [`InteractionGraph::restore`] gives back an
    /// equal graph.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for u in self.users() {
            out.push_str("U\t");
            out.push_str(self.user_id(u));
            for &i in self.user_items(u) {
                let _ = write!(out, "\t{}", self.item_id(i));
            }
            out.push('\n');
        }
        for i in self.items() {
            out.push_str("I\t");
            out.push_str(self.item_id(i));
            for &u in self.item_users(i) {
                let _ = write!(out, "\t{}", self.user_id(u));
            }
            out.push('\n');
        }
        out
    }

    pub fn restore(text: &str) -> Result<Self, GraphError> {
        let mut g = Self::default();
        let mut edges = Vec::new();
        let mut item_lines = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let kind = fields.next().unwrap_or_default();
            let Some(id) = fields.next().filter(|s| !s.is_empty()) else {
                return Err(GraphError::Parse {
                    line: line_no,
                    message: "missing node id".into(),
                });
            };
            match kind {
                "U" => {
                    let u = g.add_user(id);
                    for item in fields {
                        edges.push((u, item, line_no));
                    }
                }
                "I" => item_lines.push((id, fields.collect::<Vec<_>>(), line_no)),
                other => {
                    return Err(GraphError::Parse {
                        line: line_no,
                        message: format!("unknown node kind {other:?}"),
                    })
                }
            }
        }
        for (id, _, _) in &item_lines {
            g.add_item(id);
        }
        for (u, item, line) in edges {
            let Some(i) = g.item_ix(item) else {
                return Err(GraphError::Parse {
                    line,
                    message: format!("edge to undeclared item {item:?}"),
                });
            };
            g.push_edge(u, i);
        }
        g.normalize();
        for (id, users, line) in item_lines {
            let i = g.item_index[id];
            let listed: Vec<UserIx> = users.iter().filter_map(|u| g.user_ix(u)).collect();
            let mut listed_sorted = listed.clone();
            listed_sorted.sort_unstable();
            listed_sorted.dedup();
            if listed.len() != users.len() || listed_sorted != g.item_users[i.index()] {
                return Err(GraphError::Parse {
                    line,
                    message: format!("item {id:?} adjacency disagrees with user lines"),
                });
            }
        }
        Ok(g)
    }
}

/// One node per user and article that appears in a history or a clicked
/// impression; one unweighted edge per distinct pair.
pub fn build_graph(behaviors: &[BehaviorRecord]) -> InteractionGraph {
    InteractionGraph::from_edges(
        behaviors
            .iter()
            .flat_map(|b| b.interactions().map(move |i| (b.user_id.as_str(), i))),
    )
}

pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64, GraphError> {
    if x.len() != y.len() {
        return Err(GraphError::DimensionMismatch(x.len(), y.len()));
    }
    let (mut dot, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        return Err(GraphError::ZeroVector);
    }
    Ok((dot / (libm::sqrt(xx) * libm::sqrt(yy))).clamp(-1.0, 1.0))
}

/// Exact cosine nearest-neighbour search over the warm items of a graph.
#[derive(Debug, Clone)]
pub struct SimilarityIndex {
    entries: Vec<(ItemIx, String, Vec<f64>)>,
}

impl SimilarityIndex {
    /// Indexes every warm (degree >= 1) item that has a non-zero embedding
    /// in the corpus.
    pub fn new(graph: &InteractionGraph, corpus: &Corpus) -> Self {
        let mut entries = Vec::new();
        for i in graph.items() {
            if graph.item_degree(i) == 0 {
                continue;
            }
            let id = graph.item_id(i);
            let Some(emb) = corpus.get(id).and_then(|a| a.embedding.as_ref()) else {
                continue;
            };
            let norm = libm::sqrt(emb.iter().map(|v| v * v).sum::<f64>());
            if norm == 0.0 {
                continue;
            }
            entries.push((i, id.into(), emb.iter().map(|v| v / norm).collect()));
        }
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `k` most similar indexed items, by descending similarity and then
    /// ascending item id.
    pub fn top_k(&self, query: &[f64], k: usize) -> Result<Vec<(ItemIx, f64)>, GraphError> {
        let mut scored = Vec::with_capacity(self.entries.len());
        for (ix, id, v) in &self.entries {
            scored.push((cosine_similarity(query, v)?, id.as_str(), *ix));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        Ok(scored.into_iter().take(k).map(|(s, _, ix)| (ix, s)).collect())
    }
}

/// Connects every cold corpus article (no node yet, or degree zero) to all
/// users of its `k` most similar warm articles. Warm items and existing edges
/// are left alone.
pub fn augment_cold_items(
    graph: InteractionGraph,
    corpus: &Corpus,
    index: &SimilarityIndex,
    k: usize,
) -> Result<InteractionGraph, GraphError> {
    let cold: Vec<&crate::corpus::Article> = corpus
        .iter()
        .filter(|a| graph.item_ix(&a.id).is_none_or(|i| graph.item_degree(i) == 0))
        .collect();
    if cold.is_empty() {
        return Ok(graph);
    }
    if index.len() < k {
        return Err(GraphError::NotEnoughWarmItems {
            needed: k,
            available: index.len(),
        });
    }
    let mut new_edges: Vec<(&str, Vec<UserIx>)> = Vec::with_capacity(cold.len());
    for a in &cold {
        let emb = a
            .embedding
            .as_ref()
            .filter(|e| !e.is_empty())
            .ok_or_else(|| GraphError::ColdItemWithoutEmbedding(a.id.clone()))?;
        let mut users = BTreeSet::new();
        for (neighbor, _) in index.top_k(emb, k)? {
            users.extend(graph.item_users(neighbor).iter().copied());
        }
        new_edges.push((a.id.as_str(), users.into_iter().collect()));
    }
    let mut g = graph;
    for (id, users) in new_edges {
        let i = g.add_item(id);
        for u in users {
            g.push_edge(u, i);
        }
    }
    g.normalize();
    Ok(g)
}

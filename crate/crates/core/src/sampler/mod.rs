//! NTD-constrained selection and the end-to-end recommendation loop.
//!
//! [`recommend_drdw`] walks from the user, drops history items, and asks
//! [`solve_exact`] for the best candidate set whose bucket histogram matches
//! the compiled NTD exactly. If the candidates cannot satisfy the NTD the
//! walk is lengthened by two hops and the selection retried; once the hop
//! budget is spent the largest feasible smaller list is taken
//! ([`reduce_and_retry`]) and topped up by [`fill_random`].

mod constraints;
mod fill;
mod solver;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use constraints::{build_constraints, ConstraintSystem, CorpusAttributes, ItemAttributes, Objective};
pub use fill::{fill_random, FilledList};
pub use solver::{reduce_and_retry, solve_exact};

use crate::corpus::{compile_ntd, Article, BucketTable, CompiledNtd, Corpus, CorpusError, NtdSpec, PartyRegistry};
use crate::graph::InteractionGraph;
use crate::ids::{ItemIx, ScoredItem};
use crate::rerank;
use crate::walker::{self, WalkError, WalkScratch};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("candidate {0:?} has no bucket in some NTD dimension")]
    MissingAttribute(String),
    #[error("candidate {id:?} lacks numeric feature {feature:?}")]
    MissingFeature { id: String, feature: String },
    #[error("candidate, objective and membership lengths disagree")]
    Shape,
    #[error("duplicate candidate {0:?}")]
    DuplicateCandidate(String),
    #[error("the full-size system is feasible; nothing to reduce")]
    AlreadyFeasible,
    #[error("selection already has the full list size")]
    NoDeficit,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// How a selection relates to the requested list size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerStatus {
    FullSet,
    ReducedSet(usize),
    Empty,
}

impl fmt::Display for SamplerStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerStatus::FullSet => f.write_str("FULL_SET"),
            SamplerStatus::ReducedSet(n) => write!(f, "REDUCED_SET({n})"),
            SamplerStatus::Empty => f.write_str("EMPTY"),
        }
    }
}

impl core::str::FromStr for SamplerStatus {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "FULL_SET" => Ok(Self::FullSet),
            "EMPTY" => Ok(Self::Empty),
            _ => s
                .strip_prefix("REDUCED_SET(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|n| n.parse().ok())
                .map(Self::ReducedSet)
                .ok_or(()),
        }
    }
}

/// The support of a binary selection vector, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSolution {
    pub selected: Vec<String>,
    pub achieved_size: usize,
    pub objective_value: f64,
    pub status: SamplerStatus,
}

impl SamplerSolution {
    pub fn empty() -> Self {
        Self {
            selected: Vec::new(),
            achieved_size: 0,
            objective_value: 0.0,
            status: SamplerStatus::Empty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrdwConfig {
    pub list_size: usize,
    /// Hop count of the first walk.
    pub hops: u32,
    pub max_hops: u32,
    /// Popularity discount exponent; 0 keeps plain walk probabilities.
    pub beta: f64,
    pub objective: Objective,
    /// Reorder the final list so neighbouring items differ in category.
    pub space_by_category: bool,
}

impl Default for DrdwConfig {
    fn default() -> Self {
        Self {
            list_size: 20,
            hops: 3,
            max_hops: 9,
            beta: 0.0,
            objective: Objective::WalkProbability,
            space_by_category: false,
        }
    }
}

impl DrdwConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.list_size == 0 {
            return Err(SamplerError::Config("list_size must be at least 1"));
        }
        if self.hops.is_multiple_of(2) || self.max_hops.is_multiple_of(2) {
            return Err(SamplerError::Config("hops and max_hops must be odd"));
        }
        if self.max_hops < self.hops {
            return Err(SamplerError::Config("max_hops must be at least hops"));
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(SamplerError::Config("beta must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedItem {
    pub id: String,
    pub score: f64,
    /// Added by the random fill rather than the exact selection.
    pub filled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub user: String,
    pub items: Vec<RecommendedItem>,
    pub status: SamplerStatus,
    /// Hop count of the walk the selection came from.
    pub hops: u32,
    /// Fewer than `list_size` items could be produced.
    pub short: bool,
}

type ItemFilter<'a> = &'a (dyn Fn(&Article) -> bool + Sync);

/// Shared, read-only state for recommending to many users.
pub struct DrdwEngine<'a> {
    graph: &'a InteractionGraph,
    corpus: &'a Corpus,
    compiled: CompiledNtd,
    table: BucketTable,
    // graph item -> corpus article
    articles: Vec<Option<u32>>,
    // corpus article -> position in id order, for cheap tie-breaks
    id_rank: Vec<u32>,
    config: DrdwConfig,
    filter: Option<ItemFilter<'a>>,
}

impl fmt::Debug for DrdwEngine<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DrdwEngine")
            .field("users", &self.graph.user_count())
            .field("items", &self.graph.item_count())
            .field("compiled", &self.compiled)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl<'a> DrdwEngine<'a> {
    pub fn new(
        graph: &'a InteractionGraph,
        corpus: &'a Corpus,
        registry: &PartyRegistry,
        spec: &NtdSpec,
        config: DrdwConfig,
    ) -> Result<Self, SamplerError> {
        config.validate()?;
        let compiled = compile_ntd(spec, config.list_size)?;
        let table = BucketTable::new(corpus, spec, registry);
        let articles = graph
            .items()
            .map(|i| corpus.index_of(graph.item_id(i)).map(|a| a as u32))
            .collect();
        let mut by_id: Vec<usize> = (0..corpus.len()).collect();
        by_id.sort_unstable_by(|&a, &b| corpus.articles()[a].id.cmp(&corpus.articles()[b].id));
        let mut id_rank = vec![0u32; corpus.len()];
        for (r, a) in by_id.into_iter().enumerate() {
            id_rank[a] = r as u32;
        }
        Ok(Self {
            graph,
            corpus,
            compiled,
            table,
            articles,
            id_rank,
            config,
            filter: None,
        })
    }

    /// Extra candidate filter applied after history removal; articles for
    /// which it returns `false` are never recommended.
    pub fn with_filter(mut self, keep: ItemFilter<'a>) -> Self {
        self.filter = Some(keep);
        self
    }

    pub fn compiled(&self) -> &CompiledNtd {
        &self.compiled
    }

    pub fn config(&self) -> &DrdwConfig {
        &self.config
    }

    pub fn bucket_table(&self) -> &BucketTable {
        &self.table
    }

    pub fn attributes(&self) -> CorpusAttributes<'_> {
        CorpusAttributes {
            corpus: self.corpus,
            table: &self.table,
        }
    }

    /// History-filtered candidates of one walk as (article, score), best
    /// first. Ties are broken by article id.
    fn candidates(
        &self,
        user: crate::ids::UserIx,
        hops: u32,
        exclude: &[ItemIx],
        scratch: &mut WalkScratch,
    ) -> Vec<(usize, f64)> {
        let ws = walker::propagate(self.graph, user, hops, scratch);
        let ws = walker::popularity_discount(self.graph, ws, self.config.beta);
        let ws = ws.without(exclude);
        let articles = self.corpus.articles();
        let mut out: Vec<(usize, f64)> = ws
            .iter()
            .filter_map(|(i, s)| {
                let a = self.articles[i.index()]? as usize;
                if self.filter.is_some_and(|keep| !keep(&articles[a])) {
                    return None;
                }
                Some((a, s))
            })
            .collect();
        out.sort_unstable_by(|x, y| y.1.total_cmp(&x.1).then_with(|| self.id_rank[x.0].cmp(&self.id_rank[y.0])));
        out
    }

    fn scored(&self, (a, s): (usize, f64)) -> ScoredItem {
        ScoredItem::new(self.corpus.articles()[a].id.clone(), s)
    }

    /// Keeps at most `list_size` of the best candidates per joint bucket
    /// cell. No selection can use more, so the optimum is unchanged.
    fn prune(&self, candidates: &[(usize, f64)]) -> Vec<(usize, f64)> {
        let limit = self.config.list_size;
        let widths: Vec<usize> = self.compiled.dimensions.iter().map(|d| d.counts.len()).collect();
        let mut used = vec![0usize; widths.iter().product()];
        let mut kept = Vec::new();
        'next: for &c in candidates {
            let mut cell = 0;
            for (d, w) in widths.iter().enumerate() {
                match self.table.bucket(c.0, d) {
                    Some(b) => cell = cell * w + b,
                    None => continue 'next,
                }
            }
            if used[cell] < limit {
                used[cell] += 1;
                kept.push(c);
            }
        }
        kept
    }

    /// The selection system over pruned candidates, read straight from the
    /// bucket table.
    fn system(&self, kept: &[(usize, f64)]) -> Result<ConstraintSystem, SamplerError> {
        let articles = self.corpus.articles();
        let dims = self.compiled.dimensions.len();
        let mut ids = Vec::with_capacity(kept.len());
        let mut objective = Vec::with_capacity(kept.len());
        let mut membership = Vec::with_capacity(kept.len());
        for &(a, score) in kept {
            let article = &articles[a];
            let value = match &self.config.objective {
                Objective::WalkProbability => score,
                Objective::Feature(name) => {
                    article
                        .numeric_feature(name)
                        .ok_or_else(|| SamplerError::MissingFeature {
                            id: article.id.clone(),
                            feature: name.clone(),
                        })?
                }
            };
            // pruning already skipped articles outside the table
            membership.push((0..dims).map(|d| self.table.bucket(a, d).unwrap_or(usize::MAX)).collect());
            ids.push(article.id.clone());
            objective.push(value);
        }
        ConstraintSystem::from_parts(ids, objective, membership, self.compiled.clone())
    }

    /// Recommends for `user`, treating every graph neighbour of the user as
    /// history.
    pub fn recommend(&self, user: &str, seed: u64) -> Result<Recommendation, SamplerError> {
        let u = self.user(user)?;
        self.recommend_ix(u, self.graph.user_items(u), seed, &mut WalkScratch::new())
    }

    /// Recommends for `user`, removing exactly the articles in `history`.
    /// Use this when the graph carries edges that are not real history,
    /// such as those added for cold articles.
    pub fn recommend_excluding(
        &self,
        user: &str,
        history: &[&str],
        seed: u64,
    ) -> Result<Recommendation, SamplerError> {
        self.recommend_excluding_with(user, history, seed, &mut WalkScratch::new())
    }

    /// [`DrdwEngine::recommend_excluding`] reusing walk buffers; keep one
    /// scratch per worker thread.
    pub fn recommend_excluding_with(
        &self,
        user: &str,
        history: &[&str],
        seed: u64,
        scratch: &mut WalkScratch,
    ) -> Result<Recommendation, SamplerError> {
        let u = self.user(user)?;
        let exclude: Vec<ItemIx> = history.iter().filter_map(|h| self.graph.item_ix(h)).collect();
        self.recommend_ix(u, &exclude, seed, scratch)
    }

    fn user(&self, user: &str) -> Result<crate::ids::UserIx, SamplerError> {
        Ok(self
            .graph
            .user_ix(user)
            .ok_or_else(|| WalkError::UnknownUser(user.into()))?)
    }

    fn recommend_ix(
        &self,
        u: crate::ids::UserIx,
        exclude: &[ItemIx],
        seed: u64,
        scratch: &mut WalkScratch,
    ) -> Result<Recommendation, SamplerError> {
        let attrs = self.attributes();

        let mut hops = self.config.hops;
        let (candidates, kept, system, solution) = loop {
            let candidates = self.candidates(u, hops, exclude, scratch);
            let kept = self.prune(&candidates);
            let system = self.system(&kept)?;
            let solution = solve_exact(&system);
            if solution.is_some() || hops >= self.config.max_hops {
                break (candidates, kept, system, solution);
            }
            hops += 2;
        };
        let solution = match solution {
            Some(s) => s,
            None => reduce_and_retry(&system)?,
        };

        let scores: BTreeMap<&str, f64> = system
            .candidates()
            .iter()
            .zip(&kept)
            .map(|(id, &(_, s))| (id.as_str(), s))
            .collect();
        let mut items: Vec<RecommendedItem> = solution
            .selected
            .iter()
            .map(|id| RecommendedItem {
                id: id.clone(),
                score: scores[id.as_str()],
                filled: false,
            })
            .collect();
        if solution.achieved_size < self.config.list_size {
            let pool: Vec<ScoredItem> = candidates.iter().map(|&c| self.scored(c)).collect();
            let filled = fill_random(&solution, &pool, &self.compiled, &attrs, seed)?;
            let all: BTreeMap<&str, f64> = pool.iter().map(|c| (c.id.as_str(), c.score)).collect();
            items.extend(filled.filled.into_iter().map(|id| RecommendedItem {
                score: all[id.as_str()],
                id,
                filled: true,
            }));
        }

        items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        if self.config.space_by_category {
            let categories: Vec<&str> = items
                .iter()
                .map(|it| self.corpus.get(&it.id).map_or("", |a| a.category.as_str()))
                .collect();
            let order = rerank::spacing_order(&categories);
            items = order.into_iter().map(|i| items[i].clone()).collect();
        }
        Ok(Recommendation {
            user: self.graph.user_id(u).into(),
            short: items.len() < self.config.list_size,
            items,
            status: solution.status,
            hops,
        })
    }
}

/// One-shot convenience around [`DrdwEngine`].
#[allow(clippy::too_many_arguments)]
pub fn recommend_drdw(
    graph: &InteractionGraph,
    user: &str,
    corpus: &Corpus,
    registry: &PartyRegistry,
    spec: &NtdSpec,
    list_size: usize,
    max_hops: u32,
    objective: Objective,
    seed: u64,
) -> Result<Recommendation, SamplerError> {
    let config = DrdwConfig {
        list_size,
        max_hops,
        objective,
        ..DrdwConfig::default()
    };
    DrdwEngine::new(graph, corpus, registry, spec, config)?.recommend(user, seed)
}

//! Diversity-driven random walks for news recommendation.
//!
//! The crate is `no_std` (it needs `alloc`) and carries the algorithmic core:
//!
//! * [`corpus`]: annotated articles, attribute bucketing and normative target
//!   distributions (NTDs) compiled to integer bucket targets.
//! * [`graph`]: the bipartite user/item click graph and cold-item augmentation.
//! * [`walker`]: exact p-hop landing probabilities from a user.
//! * [`sampler`]: the exact binary selection that enforces an NTD, its
//!   fallback reduction, deficit-aware random fill and the end-to-end loop.
//! * [`rerank`]: score ranking, G-KL, PM-2, MMR and category spacing.
//! * [`metrics`]: divergence metrics, Gini, ILD and AUC.
//!
//! File formats, the experiment pipeline and the CLI live in the `drdw` crate.

#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod graph;
pub mod metrics;
pub mod rerank;
pub mod sampler;
pub mod walker;

mod ids;

pub use corpus::{
    compile_ntd, party_bucket, sentiment_bucket, Article, Attribute, BucketTable, CompiledNtd,
    Corpus, CorpusError, NtdBucket, NtdDimension, NtdSpec, PartyBucket, PartyRegistry,
};
pub use graph::{
    augment_cold_items, build_graph, cosine_similarity, BehaviorRecord, GraphError, Impression,
    InteractionGraph, SimilarityIndex,
};
pub use ids::{ItemIx, ScoredItem, UserIx};
pub use sampler::{
    build_constraints, fill_random, recommend_drdw, reduce_and_retry, solve_exact,
    ConstraintSystem, DrdwConfig, DrdwEngine, Objective, Recommendation, SamplerError,
    SamplerSolution, SamplerStatus,
};
pub use walker::{
    filter_history, rdw_scores, rdw_scores_with, walk_scores, walk_scores_with, WalkError, WalkScores, WalkScratch,
};

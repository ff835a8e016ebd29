//! Post-processing of scored candidate lists.
//!
//! All re-rankers take the same [`RerankCandidate`] input, so scores may come
//! from the random walk or from any external model. G-KL and PM-2 steer the
//! list toward a compiled NTD; MMR trades relevance against similarity to
//! what is already selected.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CompiledNtd;
use crate::graph::cosine_similarity;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RerankError {
    #[error("no candidates to rank")]
    EmptyPool,
    #[error("article {0:?} has no score")]
    Unscored(String),
    #[error("candidate {0:?} has no bucket in an aspect dimension")]
    MissingBucket(String),
    #[error("aspect dimension {0} is not part of the target")]
    UnknownAspect(usize),
    #[error("lambda must lie in [0, 1]")]
    Lambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankCandidate {
    pub id: String,
    pub score: f64,
    /// Bucket per dimension of the target NTD.
    pub buckets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankMethod {
    Score,
    Gkl,
    Pm2,
    Mmr,
}

/// Item similarity used by MMR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmrSimilarity {
    /// Cosine over concatenated one-hot bucket vectors of the aspects.
    #[default]
    OneHot,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    pub method: RerankMethod,
    pub lambda: f64,
    /// Indices into the target's dimensions.
    pub aspect_dimensions: Vec<usize>,
    pub list_size: usize,
    #[serde(default)]
    pub similarity: MmrSimilarity,
}

impl RerankConfig {
    pub fn new(method: RerankMethod, list_size: usize, aspects: Vec<usize>) -> Self {
        Self {
            method,
            lambda: 0.5,
            aspect_dimensions: aspects,
            list_size,
            similarity: MmrSimilarity::OneHot,
        }
    }
}

/// Runs the configured re-ranker.
pub fn rerank(
    candidates: &[RerankCandidate],
    target: &CompiledNtd,
    config: &RerankConfig,
) -> Result<Vec<String>, RerankError> {
    if !(0.0..=1.0).contains(&config.lambda) {
        return Err(RerankError::Lambda);
    }
    let aspects = &config.aspect_dimensions;
    match config.method {
        RerankMethod::Score => {
            if candidates.is_empty() {
                return Err(RerankError::EmptyPool);
            }
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by(|&a, &b| rank_cmp(&candidates[a], &candidates[b]));
            Ok(order
                .into_iter()
                .take(config.list_size)
                .map(|i| candidates[i].id.clone())
                .collect())
        }
        RerankMethod::Gkl => gkl_rerank(candidates, target, aspects, config.lambda, config.list_size),
        RerankMethod::Pm2 => pm2_rerank(candidates, target, aspects, config.list_size),
        RerankMethod::Mmr => {
            check_aspects(candidates, target, aspects)?;
            match config.similarity {
                MmrSimilarity::OneHot => {
                    let sim = |a: &RerankCandidate, b: &RerankCandidate| one_hot_similarity(a, b, aspects);
                    mmr_rerank(candidates, &sim, config.lambda, config.list_size)
                }
                MmrSimilarity::Embedding => {
                    mmr_rerank(candidates, &embedding_similarity, config.lambda, config.list_size)
                }
            }
        }
    }
}

fn rank_cmp(a: &RerankCandidate, b: &RerankCandidate) -> core::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

/// Orders `selection` by descending score, ties by ascending id.
pub fn rank_by_score(
    selection: &[String],
    scores: &BTreeMap<String, f64>,
) -> Result<Vec<String>, RerankError> {
    let mut scored = Vec::with_capacity(selection.len());
    for id in selection {
        let s = *scores.get(id).ok_or_else(|| RerankError::Unscored(id.clone()))?;
        scored.push((s, id));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored.into_iter().map(|(_, id)| id.clone()).collect())
}

/// Min-max scaled scores; all zero when every score is equal.
fn normalized_scores(candidates: &[RerankCandidate]) -> Vec<f64> {
    let (lo, hi) = candidates.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        (lo.min(c.score), hi.max(c.score))
    });
    let span = hi - lo;
    candidates
        .iter()
        .map(|c| if span > 0.0 { (c.score - lo) / span } else { 0.0 })
        .collect()
}

fn check_aspects(
    candidates: &[RerankCandidate],
    target: &CompiledNtd,
    aspects: &[usize],
) -> Result<(), RerankError> {
    if candidates.is_empty() {
        return Err(RerankError::EmptyPool);
    }
    for &d in aspects {
        let Some(dim) = target.dimensions.get(d) else {
            return Err(RerankError::UnknownAspect(d));
        };
        for c in candidates {
            if c.buckets.get(d).is_none_or(|&b| b >= dim.counts.len()) {
                return Err(RerankError::MissingBucket(c.id.clone()));
            }
        }
    }
    Ok(())
}

/// Picks the index with the largest value, breaking ties by higher score and
/// then smaller id.
fn argmax(
    candidates: &[RerankCandidate],
    open: &[bool],
    mut value: impl FnMut(usize) -> f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if !open[i] {
            continue;
        }
        let v = value(i);
        let wins = match best {
            None => true,
            Some((j, bv)) => v > bv || (v == bv && rank_cmp(c, &candidates[j]).is_lt()),
        };
        if wins {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

const KL_EPSILON: f64 = 1e-6;

/// KL(target || counts) with the list side smoothed by [`KL_EPSILON`].
fn smoothed_kl(target: &[f64], counts: &[usize], total: usize) -> f64 {
    let k = counts.len() as f64;
    target
        .iter()
        .zip(counts)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, &c)| {
            let q = (c as f64 / total as f64 + KL_EPSILON) / (1.0 + k * KL_EPSILON);
            p * libm::log(p / q)
        })
        .sum()
}

/// Greedy calibrated re-ranking. Each step adds the candidate maximizing
/// `(1-λ)·score' - λ·Σ_d KL(target_d || list_d)`, where `score'` is the
/// min-max normalized score and `list_d` the bucket distribution of the list
/// after adding the candidate.
pub fn gkl_rerank(
    candidates: &[RerankCandidate],
    target: &CompiledNtd,
    aspects: &[usize],
    lambda: f64,
    list_size: usize,
) -> Result<Vec<String>, RerankError> {
    check_aspects(candidates, target, aspects)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(RerankError::Lambda);
    }
    let norm = normalized_scores(candidates);
    let mut counts: Vec<Vec<usize>> = aspects
        .iter()
        .map(|&d| vec![0; target.dimensions[d].counts.len()])
        .collect();
    let mut open = vec![true; candidates.len()];
    let mut out = Vec::with_capacity(list_size);
    while out.len() < list_size {
        let size = out.len() + 1;
        // KL depends only on the candidate's aspect buckets
        let mut cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        let pick = argmax(candidates, &open, |i| {
            let key: Vec<usize> = aspects.iter().map(|&d| candidates[i].buckets[d]).collect();
            let kl = *cache.entry(key.clone()).or_insert_with(|| {
                aspects
                    .iter()
                    .enumerate()
                    .map(|(a, &d)| {
                        counts[a][key[a]] += 1;
                        let kl = smoothed_kl(&target.dimensions[d].proportions, &counts[a], size);
                        counts[a][key[a]] -= 1;
                        kl
                    })
                    .sum()
            });
            (1.0 - lambda) * norm[i] - lambda * kl
        });
        let Some(i) = pick else { break };
        open[i] = false;
        for (a, &d) in aspects.iter().enumerate() {
            counts[a][candidates[i].buckets[d]] += 1;
        }
        out.push(candidates[i].id.clone());
    }
    Ok(out)
}

/// Proportional seat allocation over the joint cells of the aspect
/// dimensions. Each seat goes to the cell with the largest quotient
/// `v / (2s + 1)`, where `v` is the cell's target share (product of its
/// marginals) and `s` the seats it already holds; the cell's best remaining
/// candidate takes the seat.
pub fn pm2_rerank(
    candidates: &[RerankCandidate],
    target: &CompiledNtd,
    aspects: &[usize],
    list_size: usize,
) -> Result<Vec<String>, RerankError> {
    check_aspects(candidates, target, aspects)?;
    let mut cells: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (i, c) in candidates.iter().enumerate() {
        let key = aspects.iter().map(|&d| c.buckets[d]).collect();
        cells.entry(key).or_default().push(i);
    }
    struct Seat {
        share: f64,
        seats: usize,
        // best last, so `pop` yields the next pick
        queue: Vec<usize>,
    }
    let mut seats: Vec<Seat> = cells
        .into_iter()
        .map(|(key, mut members)| {
            members.sort_by(|&a, &b| rank_cmp(&candidates[b], &candidates[a]));
            let share = key
                .iter()
                .zip(aspects)
                .map(|(&b, &d)| target.dimensions[d].proportions[b])
                .product();
            Seat {
                share,
                seats: 0,
                queue: members,
            }
        })
        .collect();
    let mut out = Vec::with_capacity(list_size);
    while out.len() < list_size {
        let mut best: Option<(usize, f64)> = None;
        for (s, seat) in seats.iter().enumerate() {
            let Some(&head) = seat.queue.last() else {
                continue;
            };
            let q = seat.share / (2 * seat.seats + 1) as f64;
            let wins = match best {
                None => true,
                Some((t, bq)) => {
                    let other = *seats[t].queue.last().unwrap();
                    q > bq || (q == bq && rank_cmp(&candidates[head], &candidates[other]).is_lt())
                }
            };
            if wins {
                best = Some((s, q));
            }
        }
        let Some((s, _)) = best else { break };
        let i = seats[s].queue.pop().unwrap();
        seats[s].seats += 1;
        out.push(candidates[i].id.clone());
    }
    Ok(out)
}

/// Share of aspect dimensions in which two candidates fall in the same
/// bucket: the cosine of their concatenated one-hot vectors.
pub fn one_hot_similarity(a: &RerankCandidate, b: &RerankCandidate, aspects: &[usize]) -> f64 {
    if aspects.is_empty() {
        return 0.0;
    }
    let same = aspects.iter().filter(|&&d| a.buckets[d] == b.buckets[d]).count();
    same as f64 / aspects.len() as f64
}

/// Embedding cosine; 0 when either side lacks a usable embedding.
pub fn embedding_similarity(a: &RerankCandidate, b: &RerankCandidate) -> f64 {
    match (&a.embedding, &b.embedding) {
        (Some(x), Some(y)) => cosine_similarity(x, y).unwrap_or(0.0),
        _ => 0.0,
    }
}

/// Maximal marginal relevance: each step adds the candidate maximizing
/// `λ·score' - (1-λ)·max_{s∈selected} sim(candidate, s)`.
pub fn mmr_rerank(
    candidates: &[RerankCandidate],
    similarity: &dyn Fn(&RerankCandidate, &RerankCandidate) -> f64,
    lambda: f64,
    list_size: usize,
) -> Result<Vec<String>, RerankError> {
    if candidates.is_empty() {
        return Err(RerankError::EmptyPool);
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(RerankError::Lambda);
    }
    let norm = normalized_scores(candidates);
    let mut open = vec![true; candidates.len()];
    // running max similarity to the selected set
    let mut redundancy = vec![0.0f64; candidates.len()];
    let mut out = Vec::with_capacity(list_size);
    while out.len() < list_size {
        let Some(i) = argmax(candidates, &open, |i| lambda * norm[i] - (1.0 - lambda) * redundancy[i])
        else {
            break;
        };
        open[i] = false;
        for j in 0..candidates.len() {
            if open[j] {
                redundancy[j] = redundancy[j].max(similarity(&candidates[j], &candidates[i]));
            }
        }
        out.push(candidates[i].id.clone());
    }
    Ok(out)
}

/// Reorders an already ranked list so that neighbouring items differ in
/// category where possible, keeping the same items.
pub fn space_by_category(ordered: &[String], categories: &BTreeMap<String, String>) -> Vec<String> {
    let cats: Vec<&str> = ordered
        .iter()
        .map(|id| categories.get(id).map_or("", String::as_str))
        .collect();
    spacing_order(&cats)
        .into_iter()
        .map(|i| ordered[i].clone())
        .collect()
}

/// Positions of the greedy spacing: repeatedly take the category with the
/// most remaining items that differs from the previous one (earlier rank
/// wins ties) and place its best-ranked item. If only the previous category
/// is left, its best-ranked item is placed.
pub fn spacing_order(categories: &[&str]) -> Vec<usize> {
    let mut queues: BTreeMap<&str, alloc::collections::VecDeque<usize>> = BTreeMap::new();
    for (i, c) in categories.iter().enumerate() {
        queues.entry(c).or_default().push_back(i);
    }
    let mut out = Vec::with_capacity(categories.len());
    let mut previous: Option<&str> = None;
    while out.len() < categories.len() {
        let mut best: Option<(&str, usize, usize)> = None;
        for (&cat, q) in &queues {
            let Some(&head) = q.front() else { continue };
            if Some(cat) == previous {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, len, h)) => q.len() > len || (q.len() == len && head < h),
            };
            if better {
                best = Some((cat, q.len(), head));
            }
        }
        let cat = match best {
            Some((cat, _, _)) => cat,
            None => previous.expect("items remain, so some category is non-empty"),
        };
        let i = queues.get_mut(cat).unwrap().pop_front().unwrap();
        out.push(i);
        previous = Some(cat);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{compile_ntd, Attribute, NtdDimension, NtdSpec};
    use alloc::string::ToString;
    use alloc::vec::Vec;

    fn cand(id: &str, score: f64, buckets: &[usize]) -> RerankCandidate {
        RerankCandidate {
            id: id.into(),
            score,
            buckets: buckets.to_vec(),
            embedding: None,
        }
    }

    fn two_bucket(size: usize) -> CompiledNtd {
        let spec = NtdSpec::new(vec![NtdDimension::new(
            "d",
            Attribute::Category,
            [("x", 0.5), ("y", 0.5)],
        )])
        .unwrap();
        compile_ntd(&spec, size).unwrap()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rank_by_score_orders_and_breaks_ties() {
        let scores: BTreeMap<String, f64> =
            [("a", 0.3), ("b", 0.5), ("c", 0.1)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert_eq!(rank_by_score(&ids(&["a", "b", "c"]), &scores).unwrap(), ids(&["b", "a", "c"]));
        let tied: BTreeMap<String, f64> = [("b", 0.5), ("a", 0.5)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert_eq!(rank_by_score(&ids(&["b", "a"]), &tied).unwrap(), ids(&["a", "b"]));
        assert_eq!(rank_by_score(&ids(&["a"]), &scores).unwrap(), ids(&["a"]));
        assert_eq!(
            rank_by_score(&ids(&["zz"]), &scores),
            Err(RerankError::Unscored("zz".into()))
        );
    }

    fn pool() -> Vec<RerankCandidate> {
        vec![
            cand("a", 0.9, &[0]),
            cand("b", 0.8, &[0]),
            cand("c", 0.3, &[1]),
            cand("d", 0.2, &[1]),
        ]
    }

    #[test]
    fn gkl_pure_relevance_is_score_order() {
        let got = gkl_rerank(&pool(), &two_bucket(2), &[0], 0.0, 3).unwrap();
        assert_eq!(got, ids(&["a", "b", "c"]));
    }

    #[test]
    fn gkl_pure_calibration_balances_two_buckets() {
        // step 1: both buckets give KL(0.5,0.5 || 1,0) -> tie, score picks a.
        // step 2: bucket 1 yields (0.5,0.5) with KL 0, bucket 0 stays skewed.
        let got = gkl_rerank(&pool(), &two_bucket(2), &[0], 1.0, 2).unwrap();
        assert_eq!(got, ids(&["a", "c"]));
    }

    #[test]
    fn pm2_alternates_equal_buckets() {
        let got = pm2_rerank(&pool(), &two_bucket(2), &[0], 2).unwrap();
        assert_eq!(got, ids(&["a", "c"]));
    }

    #[test]
    fn pm2_single_bucket_is_score_order() {
        let spec = NtdSpec::new(vec![NtdDimension::new("d", Attribute::Category, [("x", 1.0)])]).unwrap();
        let target = compile_ntd(&spec, 3).unwrap();
        let p: Vec<_> = ["q", "r", "s", "t"]
            .iter()
            .zip([0.1, 0.7, 0.4, 0.9])
            .map(|(id, s)| cand(id, s, &[0]))
            .collect();
        assert_eq!(pm2_rerank(&p, &target, &[0], 3).unwrap(), ids(&["t", "r", "s"]));
    }

    #[test]
    fn pm2_skips_zero_share_buckets() {
        let spec = NtdSpec::new(vec![NtdDimension::new(
            "d",
            Attribute::Category,
            [("x", 1.0), ("y", 0.0)],
        )])
        .unwrap();
        let target = compile_ntd(&spec, 2).unwrap();
        let p = vec![cand("hot", 1.0, &[1]), cand("a", 0.1, &[0]), cand("b", 0.2, &[0])];
        assert_eq!(pm2_rerank(&p, &target, &[0], 3).unwrap(), ids(&["b", "a", "hot"]));
    }

    #[test]
    fn mmr_endpoints() {
        let target = two_bucket(2);
        let mut cfg = RerankConfig::new(RerankMethod::Mmr, 3, vec![0]);
        cfg.lambda = 1.0;
        assert_eq!(rerank(&pool(), &target, &cfg).unwrap(), ids(&["a", "b", "c"]));
        cfg.lambda = 0.0;
        let got = rerank(&pool(), &target, &cfg).unwrap();
        assert_eq!(&got[..2], &ids(&["a", "c"])[..]);
    }

    #[test]
    fn mmr_hand_trace() {
        // scores normalize to x=1, y=0.5, z=0; sim(x,y)=0.9, sim(x,z)=0.1, sim(y,z)=0.2
        // step 1: x (0.5). step 2: y = 0.25-0.45=-0.2, z = 0-0.05=-0.05 -> z. step 3: y.
        let p = vec![cand("x", 1.0, &[]), cand("y", 0.6, &[]), cand("z", 0.2, &[])];
        let sim = |a: &RerankCandidate, b: &RerankCandidate| {
            let mut k = [a.id.as_str(), b.id.as_str()];
            k.sort();
            match k {
                ["x", "y"] => 0.9,
                ["x", "z"] => 0.1,
                ["y", "z"] => 0.2,
                _ => 1.0,
            }
        };
        assert_eq!(mmr_rerank(&p, &sim, 0.5, 3).unwrap(), ids(&["x", "z", "y"]));
    }

    #[test]
    fn empty_pools_are_rejected() {
        let t = two_bucket(2);
        assert_eq!(gkl_rerank(&[], &t, &[0], 0.5, 2), Err(RerankError::EmptyPool));
        assert_eq!(pm2_rerank(&[], &t, &[0], 2), Err(RerankError::EmptyPool));
        assert_eq!(mmr_rerank(&[], &embedding_similarity, 0.5, 2), Err(RerankError::EmptyPool));
    }

    #[test]
    fn spacing_examples() {
        let cats = BTreeMap::from([
            ("a1".to_string(), "A".to_string()),
            ("a2".to_string(), "A".to_string()),
            ("b1".to_string(), "B".to_string()),
            ("b2".to_string(), "B".to_string()),
        ]);
        let spaced = space_by_category(&ids(&["a1", "a2", "b1", "b2"]), &cats);
        assert_eq!(spaced, ids(&["a1", "b1", "a2", "b2"]));
        assert_eq!(spacing_order(&["A", "A", "A"]), vec![0, 1, 2]);
    }
}

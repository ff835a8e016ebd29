//! Evaluation metrics: rank-aware Jensen-Shannon divergences against a
//! reference distribution, Gini over bucket proportions, intra-list
//! distance and impression-level AUC.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod divergence;
mod report;

pub use divergence::{
    activation, alternative_voices, calibration, complexity_quartiles, fragmentation,
    representation, CalibrationAttribute, CalibrationResult, MetricSettings, VoicesMode,
};
pub use report::{evaluate_lists, EvaluationInput, MetricsReport, StrategyMetrics};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("distribution has no buckets")]
    EmptyDistribution,
    #[error("probabilities must be non-negative, finite and sum to 1")]
    InvalidProbabilities,
    #[error("labels and values differ in length")]
    Shape,
    #[error("duplicate bucket label {0:?}")]
    DuplicateLabel(String),
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("all values are zero")]
    AllZero,
    #[error("article {0:?} is not in the corpus")]
    UnknownArticle(String),
    #[error("no non-empty recommendation list to evaluate")]
    NoLists,
    #[error("the pool is empty")]
    EmptyPool,
    #[error("lists and histories differ in length")]
    HistoryShape,
    #[error("feature vector is zero or of mismatched length")]
    BadVector,
}

/// A probability distribution over named buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    labels: Vec<String>,
    probabilities: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(labels: Vec<String>, probabilities: Vec<f64>) -> Result<Self, MetricsError> {
        if labels.len() != probabilities.len() {
            return Err(MetricsError::Shape);
        }
        if labels.is_empty() {
            return Err(MetricsError::EmptyDistribution);
        }
        let mut seen = alloc::collections::BTreeSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(MetricsError::DuplicateLabel(dup.clone()));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0)
            || libm::fabs(probabilities.iter().sum::<f64>() - 1.0) > 1e-9
        {
            return Err(MetricsError::InvalidProbabilities);
        }
        Ok(Self {
            labels,
            probabilities,
        })
    }

    /// Normalizes non-negative masses (counts or weights) to probabilities.
    pub fn from_counts(labels: Vec<String>, counts: &[f64]) -> Result<Self, MetricsError> {
        if labels.len() != counts.len() {
            return Err(MetricsError::Shape);
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(MetricsError::InvalidProbabilities);
        }
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(MetricsError::AllZero);
        }
        Self::new(labels, counts.iter().map(|c| c / total).collect())
    }

    /// Sums masses per label, in label order.
    pub fn from_masses<'a, I>(masses: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
        for (label, m) in masses {
            *acc.entry(label).or_insert(0.0) += m;
        }
        let (labels, counts): (Vec<String>, Vec<f64>) =
            acc.into_iter().map(|(l, m)| (String::from(l), m)).unzip();
        if labels.is_empty() {
            return Err(MetricsError::EmptyDistribution);
        }
        Self::from_counts(labels, &counts)
    }

    /// Distribution of labels listed in rank order, each weighted by the
    /// discount of its (1-based) rank.
    pub fn ranked<'a, I>(labels: I, discount: RankDiscount) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        Self::from_masses(
            labels
                .into_iter()
                .enumerate()
                .map(|(r, l)| (l, discount.weight(r + 1))),
        )
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, label: &str) -> f64 {
        self.labels
            .iter()
            .position(|l| l == label)
            .map_or(0.0, |i| self.probabilities[i])
    }
}

/// Weight given to the item at a 1-based rank on the recommendation side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankDiscount {
    /// `1 / log2(r + 1)`.
    #[default]
    Log2,
    None,
}

impl RankDiscount {
    pub fn weight(self, rank: usize) -> f64 {
        match self {
            RankDiscount::Log2 => 1.0 / libm::log2(rank as f64 + 1.0),
            RankDiscount::None => 1.0,
        }
    }
}

/// Smoothing mass added to every bucket before comparing distributions.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Jensen-Shannon divergence (base 2, so within `[0, 1]`) with the default
/// smoothing.
pub fn js_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    js_divergence_with(p, q, DEFAULT_EPSILON)
}

/// Jensen-Shannon divergence over the union of both label sets. Each side is
/// smoothed as `(x + ε) / (1 + kε)` for `k` union buckets.
pub fn js_divergence_with(p: &DiscreteDistribution, q: &DiscreteDistribution, epsilon: f64) -> f64 {
    let mut union: Vec<&str> = p
        .labels
        .iter()
        .chain(&q.labels)
        .map(String::as_str)
        .collect();
    union.sort_unstable();
    union.dedup();
    let k = union.len() as f64;
    let smooth = |x: f64| (x + epsilon) / (1.0 + k * epsilon);
    let mut js = 0.0;
    for label in union {
        let a = smooth(p.probability(label));
        let b = smooth(q.probability(label));
        let m = 0.5 * (a + b);
        if a > 0.0 {
            js += 0.5 * a * libm::log2(a / m);
        }
        if b > 0.0 {
            js += 0.5 * b * libm::log2(b / m);
        }
    }
    js.clamp(0.0, 1.0)
}

/// Sample Gini coefficient `ΣΣ|xi - xj| / (2 n (n-1) mean)`.
pub fn gini(values: &[f64]) -> Result<f64, MetricsError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricsError::TooFewValues { needed: 2, got: n });
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(MetricsError::InvalidProbabilities);
    }
    let sum: f64 = values.iter().sum();
    if sum <= 0.0 {
        return Err(MetricsError::AllZero);
    }
    // sorted form of the pairwise sum: Σ_i (2i - n + 1) x_(i)
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pairwise: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - n as f64 + 1.0) * x)
        .sum::<f64>()
        * 2.0;
    let mean = sum / n as f64;
    Ok(pairwise / (2.0 * (n * (n - 1)) as f64 * mean))
}

/// Mean cosine distance over unordered pairs of feature vectors.
pub fn ild(vectors: &[Vec<f64>]) -> Result<f64, MetricsError> {
    let n = vectors.len();
    if n < 2 {
        return Err(MetricsError::TooFewValues { needed: 2, got: n });
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let sim = crate::graph::cosine_similarity(&vectors[i], &vectors[j])
                .map_err(|_| MetricsError::BadVector)?;
            total += 1.0 - sim;
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// [`ild`] of one-hot encodings of bucket indices, computed from counts.
pub fn one_hot_ild(buckets: &[usize]) -> Result<f64, MetricsError> {
    let n = buckets.len();
    if n < 2 {
        return Err(MetricsError::TooFewValues { needed: 2, got: n });
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &b in buckets {
        *counts.entry(b).or_insert(0) += 1;
    }
    let same: usize = counts.values().map(|&c| c * (c - 1) / 2).sum();
    Ok(1.0 - same as f64 / (n * (n - 1) / 2) as f64)
}

/// Gini of the bucket proportions of a list over `bucket_count` buckets.
pub fn bucket_gini(buckets: &[usize], bucket_count: usize) -> Result<f64, MetricsError> {
    let mut counts = alloc::vec![0.0; bucket_count];
    for &b in buckets {
        if let Some(c) = counts.get_mut(b) {
            *c += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(MetricsError::AllZero);
    }
    gini(&counts.iter().map(|c| c / total).collect::<Vec<_>>())
}

/// One impression: clicked flags and model scores of its items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredImpression {
    pub clicked: Vec<bool>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    /// Macro average over evaluated impressions; absent if there were none.
    pub value: Option<f64>,
    pub evaluated: usize,
    /// Impressions lacking a positive or a negative item.
    pub skipped: usize,
}

/// AUC of a single impression: share of (positive, negative) pairs with the
/// positive scored higher, ties counting one half. `None` when one class is
/// missing.
pub fn impression_auc(clicked: &[bool], scores: &[f64]) -> Option<f64> {
    let mut items: Vec<(f64, bool)> = scores.iter().copied().zip(clicked.iter().copied()).collect();
    let positives = items.iter().filter(|(_, c)| *c).count();
    let negatives = items.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mann-Whitney with midranks for ties
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j < items.len() && items[j].0 == items[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        rank_sum += midrank * items[i..j].iter().filter(|(_, c)| *c).count() as f64;
        i = j;
    }
    let p = positives as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

/// Macro-averaged AUC over impressions.
pub fn auc(impressions: &[ScoredImpression]) -> AucResult {
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for imp in impressions {
        match impression_auc(&imp.clicked, &imp.scores) {
            Some(a) => {
                sum += a;
                evaluated += 1;
            }
            None => skipped += 1,
        }
    }
    AucResult {
        value: (evaluated > 0).then(|| sum / evaluated as f64),
        evaluated,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn dist(pairs: &[(&str, f64)]) -> DiscreteDistribution {
        DiscreteDistribution::new(
            pairs.iter().map(|(l, _)| l.to_string()).collect(),
            pairs.iter().map(|(_, p)| *p).collect(),
        )
        .unwrap()
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec!["a".into()], vec![0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![], vec![]).is_err());
        assert!(DiscreteDistribution::new(vec!["a".into(), "a".into()], vec![0.5, 0.5]).is_err());
        let d = DiscreteDistribution::from_counts(vec!["a".into(), "b".into()], &[1.0, 3.0]).unwrap();
        assert_eq!(d.probabilities(), &[0.25, 0.75]);
        assert_eq!(d.probability("zz"), 0.0);
    }

    #[test]
    fn ranked_weights_follow_log_discount() {
        let d = DiscreteDistribution::ranked(["x", "y"], RankDiscount::Log2).unwrap();
        let w2 = 1.0 / libm::log2(3.0);
        assert!((d.probability("x") - 1.0 / (1.0 + w2)).abs() < 1e-12);
        let flat = DiscreteDistribution::ranked(["x", "y"], RankDiscount::None).unwrap();
        assert_eq!(flat.probability("x"), 0.5);
    }

    #[test]
    fn js_examples() {
        let p = dist(&[("a", 0.5), ("b", 0.5)]);
        let q = dist(&[("a", 1.0), ("b", 0.0)]);
        // closed form: 0.5·KL(p‖m) + 0.5·KL(q‖m) with m = (0.75, 0.25)
        let m = [0.75f64, 0.25];
        let expected = 0.5 * (0.5 * (0.5 / m[0]).log2() + 0.5 * (0.5 / m[1]).log2())
            + 0.5 * (1.0 / m[0]).log2();
        assert!((js_divergence_with(&p, &q, 0.0) - expected).abs() < 1e-12);
        assert!((js_divergence(&p, &q) - 0.3113).abs() < 1e-3);
        assert_eq!(js_divergence(&p, &p), 0.0);

        let x = dist(&[("a", 1.0)]);
        let y = dist(&[("b", 1.0)]);
        assert!((js_divergence_with(&x, &y, 0.0) - 1.0).abs() < 1e-9);
        assert!((js_divergence(&x, &y) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn gini_anchors() {
        assert!((gini(&[0.2, 0.2, 0.3, 0.3]).unwrap() - 2.0 / 15.0).abs() < 1e-12);
        assert!((gini(&[0.15, 0.15, 0.15, 0.15, 0.4]).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(gini(&[0.3; 4]).unwrap(), 0.0);
        assert!(gini(&[1.0]).is_err());
        assert_eq!(gini(&[0.0, 0.0]), Err(MetricsError::AllZero));
    }

    #[test]
    fn ild_anchors() {
        let expand = |counts: &[usize]| -> Vec<usize> {
            counts.iter().enumerate().flat_map(|(b, &c)| core::iter::repeat_n(b, c)).collect()
        };
        let sentiment = expand(&[4, 6, 6, 4]);
        assert!((one_hot_ild(&sentiment).unwrap() - 148.0 / 190.0).abs() < 1e-12);
        let party = expand(&[3, 3, 3, 3, 8]);
        assert!((one_hot_ild(&party).unwrap() - 150.0 / 190.0).abs() < 1e-12);
        let vectors: Vec<Vec<f64>> = sentiment
            .iter()
            .map(|&b| (0..4).map(|i| if i == b { 1.0 } else { 0.0 }).collect())
            .collect();
        assert!((ild(&vectors).unwrap() - one_hot_ild(&sentiment).unwrap()).abs() < 1e-12);
        assert_eq!(one_hot_ild(&[2, 2, 2]).unwrap(), 0.0);
    }

    #[test]
    fn auc_examples() {
        let r = auc(&[ScoredImpression {
            clicked: vec![true, false, false, true],
            scores: vec![0.9, 0.8, 0.3, 0.4],
        }]);
        assert_eq!(r.value, Some(0.75));
        assert_eq!(impression_auc(&[true, false], &[1.0, 0.0]), Some(1.0));
        assert_eq!(impression_auc(&[true, false], &[0.5, 0.5]), Some(0.5));
        let skipped = auc(&[ScoredImpression {
            clicked: vec![false, false],
            scores: vec![0.1, 0.2],
        }]);
        assert_eq!((skipped.value, skipped.skipped), (None, 1));
    }

    fn brute_auc(clicked: &[bool], scores: &[f64]) -> Option<f64> {
        let mut good = 0.0;
        let mut pairs = 0.0;
        for (i, &ci) in clicked.iter().enumerate() {
            for (j, &cj) in clicked.iter().enumerate() {
                if ci && !cj {
                    pairs += 1.0;
                    good += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        (pairs > 0.0).then(|| good / pairs)
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(items in proptest::collection::vec((any::<bool>(), 0u8..6), 1..30)) {
            let clicked: Vec<bool> = items.iter().map(|x| x.0).collect();
            let scores: Vec<f64> = items.iter().map(|x| x.1 as f64).collect();
            let got = impression_auc(&clicked, &scores);
            let want = brute_auc(&clicked, &scores);
            match (got, want) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
            let transformed: Vec<f64> = scores.iter().map(|s| libm::exp(*s) * 3.0 - 7.0).collect();
            prop_assert_eq!(impression_auc(&clicked, &transformed), got);
        }

        #[test]
        fn js_symmetric_and_bounded(a in proptest::collection::vec(0.0f64..10.0, 3), b in proptest::collection::vec(0.0f64..10.0, 3)) {
            prop_assume!(a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0);
            let labels = || vec!["x".to_string(), "y".to_string(), "z".to_string()];
            let p = DiscreteDistribution::from_counts(labels(), &a).unwrap();
            let q = DiscreteDistribution::from_counts(labels(), &b).unwrap();
            let d = js_divergence(&p, &q);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((d - js_divergence(&q, &p)).abs() < 1e-12);
        }

        #[test]
        fn gini_permutation_invariant(mut v in proptest::collection::vec(0.0f64..5.0, 2..10), seed in any::<u64>()) {
            prop_assume!(v.iter().sum::<f64>() > 0.0);
            let g = gini(&v).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
            let k = (seed as usize) % v.len();
            v.rotate_left(k);
            prop_assert!((gini(&v).unwrap() - g).abs() < 1e-12);
        }
    }
}

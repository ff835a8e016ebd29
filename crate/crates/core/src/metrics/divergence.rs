//! Divergence metrics over recommendation lists. Each compares a rank-aware
//! distribution of some article attribute in a user's list with a reference
//! distribution (the pool, the user's history or another user's list) and
//! averages the Jensen-Shannon divergence over users.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{js_divergence_with, DiscreteDistribution, MetricsError, RankDiscount, DEFAULT_EPSILON};
use crate::corpus::{party_bucket, sentiment_bucket, Article, Corpus, PartyRegistry, SENTIMENT_LABELS};

/// How minority/majority mentions count toward Alternative Voices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoicesMode {
    /// Mention counts.
    #[default]
    Mass,
    /// 1 if an article mentions the group at all.
    Presence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSettings {
    pub discount: RankDiscount,
    pub epsilon: f64,
    pub voices: VoicesMode,
    /// Fragmentation compares all user pairs up to this many, else samples.
    pub fragmentation_pairs: usize,
    pub seed: u64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            discount: RankDiscount::Log2,
            epsilon: DEFAULT_EPSILON,
            voices: VoicesMode::Mass,
            fragmentation_pairs: 10_000,
            seed: 0,
        }
    }
}

/// A mean over users together with how many users it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Absent when no user could be evaluated.
    pub value: Option<f64>,
    pub evaluated: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationAttribute {
    Category,
    /// Complexity bucketed by the corpus quartiles.
    Complexity,
}

fn resolve<'a>(corpus: &'a Corpus, ids: &[String]) -> Result<Vec<&'a Article>, MetricsError> {
    ids.iter()
        .map(|id| corpus.get(id).ok_or_else(|| MetricsError::UnknownArticle(id.clone())))
        .collect()
}

fn sentiment_label(a: &Article) -> &'static str {
    // scores are validated on corpus construction
    sentiment_bucket(a.sentiment_score).map_or("", |b| SENTIMENT_LABELS[usize::from(b) - 1])
}

fn party_label(a: &Article, registry: &PartyRegistry) -> &'static str {
    party_bucket(a.party_mentions.iter().map(String::as_str), registry).label()
}

/// Mean divergence between each non-empty list and a fixed reference.
fn mean_against_reference<'a>(
    corpus: &'a Corpus,
    lists: &[Vec<String>],
    reference: &DiscreteDistribution,
    settings: &MetricSettings,
    label: impl Fn(&'a Article) -> &'a str,
) -> Result<f64, MetricsError> {
    let mut sum = 0.0;
    let mut users = 0usize;
    for list in lists.iter().filter(|l| !l.is_empty()) {
        let articles = resolve(corpus, list)?;
        let dist = DiscreteDistribution::ranked(articles.iter().map(|a| label(a)), settings.discount)?;
        sum += js_divergence_with(&dist, reference, settings.epsilon);
        users += 1;
    }
    if users == 0 {
        return Err(MetricsError::NoLists);
    }
    Ok(sum / users as f64)
}

fn pool_distribution<'a>(
    corpus: &'a Corpus,
    pool: &[String],
    label: impl Fn(&'a Article) -> &'a str,
) -> Result<DiscreteDistribution, MetricsError> {
    if pool.is_empty() {
        return Err(MetricsError::EmptyPool);
    }
    let articles = resolve(corpus, pool)?;
    DiscreteDistribution::from_masses(articles.iter().map(|a| (label(a), 1.0)))
}

/// Sentiment-bucket divergence of lists from the pool.
pub fn activation(
    corpus: &Corpus,
    lists: &[Vec<String>],
    pool: &[String],
    settings: &MetricSettings,
) -> Result<f64, MetricsError> {
    let reference = pool_distribution(corpus, pool, |a| sentiment_label(a))?;
    mean_against_reference(corpus, lists, &reference, settings, |a| sentiment_label(a))
}

/// Party-bucket divergence of lists from the pool.
pub fn representation(
    corpus: &Corpus,
    registry: &PartyRegistry,
    lists: &[Vec<String>],
    pool: &[String],
    settings: &MetricSettings,
) -> Result<f64, MetricsError> {
    let reference = pool_distribution(corpus, pool, |a| party_label(a, registry))?;
    mean_against_reference(corpus, lists, &reference, settings, |a| party_label(a, registry))
}

/// Lower quartile, median and upper quartile of the corpus complexity
/// scores (nearest rank), or `None` if no article has one.
pub fn complexity_quartiles(corpus: &Corpus) -> Option<[f64; 3]> {
    let mut values: Vec<f64> = corpus.iter().filter_map(|a| a.complexity).collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let at = |q: usize| values[(q * n).div_ceil(4).max(1) - 1];
    Some([at(1), at(2), at(3)])
}

const QUARTILE_LABELS: [&str; 4] = ["q1", "q2", "q3", "q4"];

fn quartile_label(value: f64, cuts: &[f64; 3]) -> &'static str {
    QUARTILE_LABELS[cuts.iter().filter(|&&c| value > c).count()]
}

fn attribute_label<'a>(
    a: &'a Article,
    attribute: CalibrationAttribute,
    cuts: Option<&[f64; 3]>,
) -> Option<&'a str> {
    match attribute {
        CalibrationAttribute::Category => Some(a.category.as_str()),
        CalibrationAttribute::Complexity => Some(quartile_label(a.complexity?, cuts?)),
    }
}

/// Per-user divergence of the list from the user's own history, for
/// category or complexity. Users whose history (or list) carries no value of
/// the attribute are excluded and counted.
pub fn calibration(
    corpus: &Corpus,
    lists: &[Vec<String>],
    histories: &[Vec<String>],
    attribute: CalibrationAttribute,
    settings: &MetricSettings,
) -> Result<CalibrationResult, MetricsError> {
    if lists.len() != histories.len() {
        return Err(MetricsError::HistoryShape);
    }
    let cuts = complexity_quartiles(corpus);
    let label = |a| attribute_label(a, attribute, cuts.as_ref());
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut excluded = 0;
    for (list, history) in lists.iter().zip(histories) {
        let rec = resolve(corpus, list)?;
        let hist = resolve(corpus, history)?;
        let rec_masses = rec
            .iter()
            .enumerate()
            .filter_map(|(r, a)| Some((label(a)?, settings.discount.weight(r + 1))));
        let rec_dist = DiscreteDistribution::from_masses(rec_masses);
        let hist_dist = DiscreteDistribution::from_masses(hist.iter().filter_map(|a| Some((label(a)?, 1.0))));
        match (rec_dist, hist_dist) {
            (Ok(r), Ok(h)) => {
                sum += js_divergence_with(&r, &h, settings.epsilon);
                evaluated += 1;
            }
            _ => excluded += 1,
        }
    }
    Ok(CalibrationResult {
        value: (evaluated > 0).then(|| sum / evaluated as f64),
        evaluated,
        excluded,
    })
}

/// Mean divergence between the story distributions of pairs of users.
/// Articles without a story form a story of their own. Absent with fewer
/// than two non-empty lists.
pub fn fragmentation(
    corpus: &Corpus,
    lists: &[Vec<String>],
    settings: &MetricSettings,
) -> Result<Option<f64>, MetricsError> {
    let mut dists = Vec::new();
    for list in lists.iter().filter(|l| !l.is_empty()) {
        let articles = resolve(corpus, list)?;
        let stories = articles.iter().map(|a| a.story_id.as_deref().unwrap_or(a.id.as_str()));
        dists.push(DiscreteDistribution::ranked(stories, settings.discount)?);
    }
    let m = dists.len();
    if m < 2 {
        return Ok(None);
    }
    let js = |i: usize, j: usize| js_divergence_with(&dists[i], &dists[j], settings.epsilon);
    let total_pairs = m * (m - 1) / 2;
    let mut sum = 0.0;
    let count = total_pairs.min(settings.fragmentation_pairs);
    if total_pairs <= settings.fragmentation_pairs {
        for i in 0..m {
            for j in i + 1..m {
                sum += js(i, j);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        for _ in 0..settings.fragmentation_pairs {
            let i = rng.random_range(0..m);
            let mut j = rng.random_range(0..m - 1);
            if j >= i {
                j += 1;
            }
            sum += js(i, j);
        }
    }
    Ok(Some(sum / count as f64))
}

/// Divergence of the (minority, majority) mention split of lists from that
/// of the pool. Absent when the pool carries no annotated mentions; lists
/// without any mentions are skipped.
pub fn alternative_voices(
    corpus: &Corpus,
    lists: &[Vec<String>],
    pool: &[String],
    settings: &MetricSettings,
) -> Result<Option<f64>, MetricsError> {
    if pool.is_empty() {
        return Err(MetricsError::EmptyPool);
    }
    let mass = |n: Option<u32>| -> f64 {
        match (settings.voices, n.unwrap_or(0)) {
            (_, 0) => 0.0,
            (VoicesMode::Presence, _) => 1.0,
            (VoicesMode::Mass, n) => f64::from(n),
        }
    };
    let split = |articles: &[&Article], discount: RankDiscount| {
        let (mut minority, mut majority) = (0.0, 0.0);
        for (r, a) in articles.iter().enumerate() {
            let w = discount.weight(r + 1);
            minority += w * mass(a.minority_mentions);
            majority += w * mass(a.majority_mentions);
        }
        DiscreteDistribution::from_counts(
            alloc::vec![String::from("minority"), String::from("majority")],
            &[minority, majority],
        )
    };
    let Ok(reference) = split(&resolve(corpus, pool)?, RankDiscount::None) else {
        return Ok(None);
    };
    let mut sum = 0.0;
    let mut users = 0usize;
    for list in lists {
        if let Ok(d) = split(&resolve(corpus, list)?, settings.discount) {
            sum += js_divergence_with(&d, &reference, settings.epsilon);
            users += 1;
        }
    }
    Ok((users > 0).then(|| sum / users as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{js_divergence_with, DiscreteDistribution};
    use alloc::string::ToString;
    use alloc::vec;
    use alloc::vec::Vec;

    fn flat() -> MetricSettings {
        MetricSettings {
            discount: RankDiscount::None,
            ..MetricSettings::default()
        }
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn corpus() -> Corpus {
        let mk = |id: &str, cat: &str, s: f64, story: &str, cx: f64| {
            let mut a = Article::new(id, cat, s);
            a.story_id = Some(story.into());
            a.complexity = Some(cx);
            a
        };
        Corpus::new(vec![
            mk("a", "news", -0.9, "s1", 1.0),
            mk("b", "news", -0.2, "s1", 2.0),
            mk("c", "sport", 0.2, "s2", 3.0),
            mk("d", "sport", 0.9, "s3", 4.0),
        ])
        .unwrap()
    }

    fn dist(pairs: &[(&str, f64)]) -> DiscreteDistribution {
        DiscreteDistribution::from_masses(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn activation_zero_when_list_mirrors_pool() {
        let c = corpus();
        let pool = ids(&["a", "b", "c", "d"]);
        let v = activation(&c, &[pool.clone(), ids(&["d", "c", "b", "a"])], &pool, &flat()).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn activation_grows_with_pool_spread() {
        let c = corpus();
        let narrow = activation(&c, &[ids(&["d"])], &ids(&["c", "d"]), &flat()).unwrap();
        let wide = activation(&c, &[ids(&["d"])], &ids(&["a", "b", "c", "d"]), &flat()).unwrap();
        assert!(narrow > 0.0 && wide > narrow);
    }

    #[test]
    fn calibration_two_users_hand_computed() {
        let c = corpus();
        let lists = [ids(&["a", "c"]), ids(&["c"])];
        let histories = [ids(&["a", "b"]), ids(&["c", "d"])];
        let r = calibration(&c, &lists, &histories, CalibrationAttribute::Category, &flat()).unwrap();
        let s = flat();
        let u1 = js_divergence_with(&dist(&[("news", 0.5), ("sport", 0.5)]), &dist(&[("news", 1.0)]), s.epsilon);
        let u2 = 0.0;
        assert!((r.value.unwrap() - (u1 + u2) / 2.0).abs() < 1e-12);
        assert_eq!((r.evaluated, r.excluded), (2, 0));

        let disjoint = calibration(&c, &[ids(&["c"])], &[ids(&["a"])], CalibrationAttribute::Category, &flat()).unwrap();
        assert!((disjoint.value.unwrap() - 1.0).abs() < 1e-3);
        let empty = calibration(&c, &[ids(&["c"])], &[vec![]], CalibrationAttribute::Category, &flat()).unwrap();
        assert_eq!((empty.value, empty.excluded), (None, 1));
    }

    #[test]
    fn complexity_uses_corpus_quartiles() {
        let c = corpus();
        assert_eq!(complexity_quartiles(&c), Some([1.0, 2.0, 3.0]));
        let r = calibration(&c, &[ids(&["d"])], &[ids(&["d"])], CalibrationAttribute::Complexity, &flat()).unwrap();
        assert_eq!(r.value, Some(0.0));
        let r = calibration(&c, &[ids(&["a"])], &[ids(&["d"])], CalibrationAttribute::Complexity, &flat()).unwrap();
        assert!(r.value.unwrap() > 0.99);
    }

    #[test]
    fn fragmentation_cases() {
        let c = corpus();
        let s = flat();
        let same = vec![ids(&["a", "c"]); 3];
        assert_eq!(fragmentation(&c, &same, &s).unwrap(), Some(0.0));
        let disjoint = [ids(&["a"]), ids(&["d"])];
        assert!((fragmentation(&c, &disjoint, &s).unwrap().unwrap() - 1.0).abs() < 1e-3);
        assert_eq!(fragmentation(&c, &[ids(&["a"])], &s).unwrap(), None);

        // a and b share story s1
        let three = [ids(&["a", "c"]), ids(&["b", "d"]), ids(&["c"])];
        let d1 = dist(&[("s1", 0.5), ("s2", 0.5)]);
        let d2 = dist(&[("s1", 0.5), ("s3", 0.5)]);
        let d3 = dist(&[("s2", 1.0)]);
        let js = |p, q| js_divergence_with(p, q, s.epsilon);
        let expected = (js(&d1, &d2) + js(&d1, &d3) + js(&d2, &d3)) / 3.0;
        assert!((fragmentation(&c, &three, &s).unwrap().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn fragmentation_sampling_is_seeded() {
        let c = corpus();
        let lists: Vec<Vec<String>> = (0..6).map(|i| ids(&[["a", "b", "c", "d"][i % 4]])).collect();
        let s = MetricSettings {
            fragmentation_pairs: 5,
            seed: 9,
            ..flat()
        };
        let a = fragmentation(&c, &lists, &s).unwrap();
        assert_eq!(a, fragmentation(&c, &lists, &s).unwrap());
        assert!((0.0..=1.0).contains(&a.unwrap()));
    }

    #[test]
    fn alternative_voices_cases() {
        let mut articles = corpus().into_articles();
        articles[0].minority_mentions = Some(2);
        articles[1].majority_mentions = Some(2);
        let c = Corpus::new(articles).unwrap();
        let pool = ids(&["a", "b", "c", "d"]);
        let s = flat();
        assert_eq!(alternative_voices(&c, &[ids(&["a", "b"])], &pool, &s).unwrap(), Some(0.0));
        let skew = alternative_voices(&c, &[ids(&["a"])], &pool, &s).unwrap().unwrap();
        let expected = js_divergence_with(
            &dist(&[("minority", 1.0)]),
            &dist(&[("minority", 0.5), ("majority", 0.5)]),
            s.epsilon,
        );
        assert!((skew - expected).abs() < 1e-12);
        // unannotated lists are skipped
        assert_eq!(alternative_voices(&c, &[ids(&["c"])], &pool, &s).unwrap(), None);
        let bare = corpus();
        assert_eq!(alternative_voices(&bare, &[ids(&["a"])], &pool, &s).unwrap(), None);
    }

    #[test]
    fn representation_single_user_five_buckets() {
        let registry = PartyRegistry::new(["G"], ["O"]).unwrap();
        let mut articles = corpus().into_articles();
        articles[0].party_mentions = ["G".to_string()].into();
        articles[1].party_mentions = ["O".to_string()].into();
        articles[2].party_mentions = ["G".to_string(), "O".to_string()].into();
        let c = Corpus::new(articles).unwrap();
        let pool = ids(&["a", "b", "c", "d"]);
        let s = flat();
        let got = representation(&c, &registry, &[ids(&["d", "a"])], &pool, &s).unwrap();
        let list = dist(&[("NONE", 0.5), ("GOV", 0.5)]);
        let reference = dist(&[("GOV", 0.25), ("OPP", 0.25), ("GOV_AND_OPP", 0.25), ("NONE", 0.25)]);
        assert!((got - js_divergence_with(&list, &reference, s.epsilon)).abs() < 1e-12);
        assert!(representation(&c, &registry, core::slice::from_ref(&pool), &pool, &s).unwrap().abs() < 1e-12);
        assert!(matches!(
            representation(&c, &registry, &[ids(&["zz"])], &pool, &s),
            Err(MetricsError::UnknownArticle(_))
        ));
    }
}

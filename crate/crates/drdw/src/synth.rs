//! Seeded synthetic news data: annotated articles with controllable bucket
//! mixes, and users with category-biased histories and clicked impressions.

use std::collections::BTreeSet;

use drdw_core::corpus::{largest_remainder, Article, PartyRegistry};
use drdw_core::graph::{BehaviorRecord, Impression};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("{0} mix must be non-negative with a positive total")]
    InvalidMix(&'static str),
    #[error("{0}")]
    InvalidSize(&'static str),
}

pub const GOVERNMENT: [&str; 2] = ["GOV_A", "GOV_B"];
pub const OPPOSITION: [&str; 3] = ["OPP_A", "OPP_B", "OPP_C"];
pub const OTHER_PARTIES: [&str; 2] = ["FOREIGN_X", "INDEPENDENT_Y"];

/// The registry the generated party mentions are drawn from.
pub fn synthetic_registry() -> PartyRegistry {
    PartyRegistry::new(GOVERNMENT, OPPOSITION).expect("disjoint party lists")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub articles: usize,
    pub users: usize,
    pub seed: u64,
    /// Shares of the sentiment ranges `[-1,-0.5)`, `[-0.5,0)`, `[0,0.5)`, `[0.5,1]`.
    pub sentiment_mix: [f64; 4],
    /// Shares of GOV, OPP, GOV_AND_OPP, INDEPENDENT_FOREIGN and NONE.
    pub party_mix: [f64; 5],
    pub categories: Vec<(String, f64)>,
    pub stories_per_category: usize,
    pub embedding_dim: usize,
    /// Articles no history touches.
    pub cold_fraction: f64,
    pub history_min: usize,
    pub history_max: usize,
    pub impressions_per_user: usize,
    pub impression_size: usize,
    pub click_rate: f64,
    /// Click-probability multiplier for the user's preferred category.
    pub click_bias: f64,
    /// Share of articles with minority/majority mention annotations.
    pub annotated_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            articles: 1000,
            users: 200,
            seed: 0,
            sentiment_mix: [0.2, 0.3, 0.3, 0.2],
            party_mix: [0.15, 0.15, 0.15, 0.15, 0.4],
            categories: ["news", "politics", "sport", "economy", "culture", "crime"]
                .iter()
                .zip([0.3, 0.2, 0.2, 0.1, 0.1, 0.1])
                .map(|(c, w)| (c.to_string(), w))
                .collect(),
            stories_per_category: 40,
            embedding_dim: 16,
            cold_fraction: 0.05,
            history_min: 5,
            history_max: 20,
            impressions_per_user: 3,
            impression_size: 10,
            click_rate: 0.15,
            click_bias: 2.5,
            annotated_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub articles: Vec<Article>,
    pub behaviors: Vec<BehaviorRecord>,
    pub registry: PartyRegistry,
}

fn normalized(mix: &[f64], name: &'static str) -> Result<Vec<f64>, SynthError> {
    let total: f64 = mix.iter().sum();
    if mix.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || total.is_nan() || total <= 0.0 {
        return Err(SynthError::InvalidMix(name));
    }
    Ok(mix.iter().map(|w| w / total).collect())
}

/// Exactly apportioned labels in random order.
fn stratified(rng: &mut ChaCha8Rng, shares: &[f64], n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = largest_remainder(shares, n)
        .iter()
        .enumerate()
        .flat_map(|(b, &c)| std::iter::repeat_n(b, c))
        .collect();
    out.shuffle(rng);
    out
}

fn sentiment_in(rng: &mut ChaCha8Rng, bucket: usize) -> f64 {
    let lo = -1.0 + 0.5 * bucket as f64;
    // three decimals, rounded down so the value stays inside its range
    let v = lo + rng.random_range(0.0..0.5);
    (v * 1000.0).floor() / 1000.0
}

fn parties_for(rng: &mut ChaCha8Rng, bucket: usize) -> Vec<&'static str> {
    match bucket {
        0 => vec![*GOVERNMENT.choose(rng).unwrap()],
        1 => vec![*OPPOSITION.choose(rng).unwrap()],
        2 => vec![*GOVERNMENT.choose(rng).unwrap(), *OPPOSITION.choose(rng).unwrap()],
        3 => {
            let mut p = vec![*OTHER_PARTIES.choose(rng).unwrap()];
            if rng.random_bool(0.3) {
                p.push(*GOVERNMENT.choose(rng).unwrap());
            }
            p
        }
        _ => Vec::new(),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates a dataset. Bucket labels are apportioned exactly (largest
/// remainder) before shuffling, so every bucket's supply matches its share.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticData, SynthError> {
    if config.articles == 0 {
        return Err(SynthError::InvalidSize("at least one article is needed"));
    }
    if config.history_min == 0 || config.history_min > config.history_max {
        return Err(SynthError::InvalidSize("history lengths must satisfy 1 <= min <= max"));
    }
    if !(0.0..1.0).contains(&config.cold_fraction) {
        return Err(SynthError::InvalidSize("cold_fraction must lie in [0, 1)"));
    }
    if config.embedding_dim == 0 || config.stories_per_category == 0 {
        return Err(SynthError::InvalidSize("embedding_dim and stories_per_category must be positive"));
    }
    let sentiment = normalized(&config.sentiment_mix, "sentiment")?;
    let party = normalized(&config.party_mix, "party")?;
    if config.categories.is_empty() {
        return Err(SynthError::InvalidMix("category"));
    }
    let weights: Vec<f64> = config.categories.iter().map(|c| c.1).collect();
    let category_shares = normalized(&weights, "category")?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.articles;
    let dim = config.embedding_dim;
    let centroids: Vec<Vec<f64>> = (0..config.categories.len())
        .map(|_| (0..dim).map(|_| normal(&mut rng)).collect())
        .collect();
    let sentiments = stratified(&mut rng, &sentiment, n);
    let parties = stratified(&mut rng, &party, n);
    let categories = stratified(&mut rng, &category_shares, n);

    let mut articles = Vec::with_capacity(n);
    for i in 0..n {
        let c = categories[i];
        let category = &config.categories[c].0;
        let mut a = Article::new(format!("N{i:06}"), category.clone(), sentiment_in(&mut rng, sentiments[i]))
            .with_parties(parties_for(&mut rng, parties[i]));
        a.story_id = Some(format!("{category}-{}", rng.random_range(0..config.stories_per_category)));
        a.complexity = Some((rng.random_range(0.0..100.0f64) * 100.0).round() / 100.0);
        a.published_at = Some(1_700_000_000 + 60 * i as i64 + rng.random_range(0..60));
        let emb = centroids[c].iter().map(|m| m + 0.6 * normal(&mut rng)).collect();
        a.embedding = Some(emb);
        if rng.random_bool(config.annotated_fraction.clamp(0.0, 1.0)) {
            a.minority_mentions = Some(rng.random_range(0..3));
            a.majority_mentions = Some(rng.random_range(0..5));
        }
        articles.push(a);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let cold_count = ((n as f64) * config.cold_fraction).floor() as usize;
    let warm: Vec<usize> = {
        let mut w = order[cold_count..].to_vec();
        w.sort_unstable();
        w
    };
    if warm.is_empty() && config.users > 0 {
        return Err(SynthError::InvalidSize("no warm articles left for histories"));
    }
    let mut warm_by_category: Vec<Vec<usize>> = vec![Vec::new(); config.categories.len()];
    for &i in &warm {
        warm_by_category[categories[i]].push(i);
    }

    let mut behaviors = Vec::with_capacity(config.users * config.impressions_per_user.max(1));
    for u in 0..config.users {
        let preferred = {
            let r: f64 = rng.random();
            let mut acc = 0.0;
            category_shares
                .iter()
                .position(|s| {
                    acc += s;
                    r < acc
                })
                .unwrap_or(category_shares.len() - 1)
        };
        let len = rng.random_range(config.history_min..=config.history_max).min(warm.len());
        let mut seen = BTreeSet::new();
        let mut history = Vec::with_capacity(len);
        while history.len() < len {
            let from = if rng.random_bool(0.7) && !warm_by_category[preferred].is_empty() {
                &warm_by_category[preferred]
            } else {
                &warm
            };
            let i = *from.choose(&mut rng).unwrap();
            if seen.insert(i) {
                history.push(articles[i].id.clone());
            }
        }
        let user_id = format!("U{u:06}");
        let shown_max = n - seen.len();
        let sessions = config.impressions_per_user.max(1);
        for k in 0..sessions {
            let size = if k < config.impressions_per_user {
                config.impression_size.min(shown_max)
            } else {
                0
            };
            let mut impressions = Vec::with_capacity(size);
            let mut shown = BTreeSet::new();
            while shown.len() < size {
                let i = rng.random_range(0..n);
                if !seen.contains(&i) && shown.insert(i) {
                    let bias = if categories[i] == preferred { config.click_bias } else { 1.0 };
                    let clicked = rng.random_bool((config.click_rate * bias).clamp(0.0, 1.0));
                    impressions.push(Impression {
                        article_id: articles[i].id.clone(),
                        clicked,
                    });
                }
            }
            // one record per session, each carrying the history as of then
            behaviors.push(BehaviorRecord {
                user_id: user_id.clone(),
                history: history.clone(),
                impressions,
                timestamp: Some(1_700_000_000 + 3600 * (u * sessions + k) as i64),
            });
        }
    }
    Ok(SyntheticData {
        articles,
        behaviors,
        registry: synthetic_registry(),
    })
}

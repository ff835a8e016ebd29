//! Annotated articles, attribute buckets and normative target distributions.
//!
//! An [`NtdSpec`] is what an editor writes down: for each dimension (sentiment,
//! party mentions, category, ...) the share of the list each bucket should
//! take. [`compile_ntd`] turns the shares into integer bucket counts for a
//! concrete list size, which become the right-hand side of the selection
//! constraints solved in [`crate::sampler`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("row {row}: sentiment out of range: {value} (article {id:?})")]
    SentimentOutOfRange { row: usize, id: String, value: f64 },
    #[error("sentiment out of range: {0}")]
    ScoreOutOfRange(f64),
    #[error("row {row}: duplicate id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("row {row}: negative complexity for article {id:?}")]
    NegativeComplexity { row: usize, id: String },
    #[error("row {row}: article {id:?} has embedding dimension {found}, expected {expected}")]
    EmbeddingDimension {
        row: usize,
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("party {0:?} is listed as both government and opposition")]
    OverlappingParties(String),
    #[error("invalid NTD: {0}")]
    InvalidNtd(String),
    #[error("list size must be positive")]
    ZeroListSize,
}

/// A news article together with the annotations the recommender needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub category: String,
    pub sentiment_score: f64,
    #[serde(default)]
    pub party_mentions: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub story_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minority_mentions: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub majority_mentions: Option<u32>,
    /// Free-form discrete attributes usable as custom NTD dimensions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl Article {
    pub fn new(id: impl Into<String>, category: impl Into<String>, sentiment_score: f64) -> Self {
        Self {
            id: id.into(),
            category: category.into(),
            sentiment_score,
            party_mentions: BTreeSet::new(),
            complexity: None,
            story_id: None,
            published_at: None,
            embedding: None,
            minority_mentions: None,
            majority_mentions: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_parties<I, S>(mut self, parties: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.party_mentions = parties.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    /// Checks the per-article invariants. `row` is only used for messages.
    pub fn validate(&self, row: usize) -> Result<(), CorpusError> {
        // NaN fails this comparison too
        if !(-1.0..=1.0).contains(&self.sentiment_score) {
            return Err(CorpusError::SentimentOutOfRange {
                row,
                id: self.id.clone(),
                value: self.sentiment_score,
            });
        }
        if let Some(c) = self.complexity {
            if c.is_nan() || c < 0.0 {
                return Err(CorpusError::NegativeComplexity {
                    row,
                    id: self.id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Numeric features usable as a sampling objective.
    pub fn numeric_feature(&self, name: &str) -> Option<f64> {
        match name {
            "published_at" | "recency" => self.published_at.map(|t| t as f64),
            "complexity" => self.complexity,
            "sentiment_score" | "sentiment" => Some(self.sentiment_score),
            _ => self.attributes.get(name).and_then(|v| v.parse().ok()),
        }
    }
}

/// A validated, immutable collection of articles with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    articles: Vec<Article>,
    by_id: BTreeMap<String, usize>,
    embedding_dim: Option<usize>,
}

impl Corpus {
    /// Validates every article; errors carry 1-based row numbers.
    pub fn new(articles: Vec<Article>) -> Result<Self, CorpusError> {
        let mut by_id = BTreeMap::new();
        let mut embedding_dim: Option<usize> = None;
        for (i, a) in articles.iter().enumerate() {
            let row = i + 1;
            a.validate(row)?;
            if by_id.insert(a.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    row,
                    id: a.id.clone(),
                });
            }
            if let Some(e) = a.embedding.as_ref().filter(|e| !e.is_empty()) {
                match embedding_dim {
                    None => embedding_dim = Some(e.len()),
                    Some(d) if d != e.len() => {
                        return Err(CorpusError::EmbeddingDimension {
                            row,
                            id: a.id.clone(),
                            expected: d,
                            found: e.len(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(Self {
            articles,
            by_id,
            embedding_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Article> {
        self.articles.iter()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        self.index_of(id).map(|i| &self.articles[i])
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    pub fn into_articles(self) -> Vec<Article> {
        self.articles
    }
}

/// Government (including supporting parties) and opposition party names.
/// Anything else counts as independent or foreign.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyRegistry {
    #[serde(default)]
    government: BTreeSet<String>,
    #[serde(default)]
    opposition: BTreeSet<String>,
}

impl PartyRegistry {
    pub fn new<G, O, S>(government: G, opposition: O) -> Result<Self, CorpusError>
    where
        G: IntoIterator<Item = S>,
        O: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let reg = Self {
            government: government.into_iter().map(Into::into).collect(),
            opposition: opposition.into_iter().map(Into::into).collect(),
        };
        reg.validate()?;
        Ok(reg)
    }

    /// Needed after deserializing, which bypasses [`PartyRegistry::new`].
    pub fn validate(&self) -> Result<(), CorpusError> {
        match self.government.intersection(&self.opposition).next() {
            Some(p) => Err(CorpusError::OverlappingParties(p.clone())),
            None => Ok(()),
        }
    }

    pub fn government(&self) -> &BTreeSet<String> {
        &self.government
    }

    pub fn opposition(&self) -> &BTreeSet<String> {
        &self.opposition
    }
}

/// Which kinds of parties an article mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PartyBucket {
    Gov,
    Opp,
    GovAndOpp,
    IndependentForeign,
    None,
}

impl PartyBucket {
    pub const ALL: [PartyBucket; 5] = [
        PartyBucket::Gov,
        PartyBucket::Opp,
        PartyBucket::GovAndOpp,
        PartyBucket::IndependentForeign,
        PartyBucket::None,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PartyBucket::Gov => "GOV",
            PartyBucket::Opp => "OPP",
            PartyBucket::GovAndOpp => "GOV_AND_OPP",
            PartyBucket::IndependentForeign => "INDEPENDENT_FOREIGN",
            PartyBucket::None => "NONE",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label() == label)
    }
}

/// Labels of the four sentiment buckets, indexed by `sentiment_bucket - 1`.
pub const SENTIMENT_LABELS: [&str; 4] = ["1", "2", "3", "4"];

/// Maps a score to one of `[-1,-0.5)`, `[-0.5,0)`, `[0,0.5)`, `[0.5,1]`,
/// numbered 1 to 4.
pub fn sentiment_bucket(score: f64) -> Result<u8, CorpusError> {
    if !(-1.0..=1.0).contains(&score) {
        return Err(CorpusError::ScoreOutOfRange(score));
    }
    Ok(if score < -0.5 {
        1
    } else if score < 0.0 {
        2
    } else if score < 0.5 {
        3
    } else {
        4
    })
}

/// Classifies a set of party mentions. A mention of any party outside the
/// registry wins over domestic mentions.
pub fn party_bucket<'a, I>(mentions: I, registry: &PartyRegistry) -> PartyBucket
where
    I: IntoIterator<Item = &'a str>,
{
    let (mut gov, mut opp) = (false, false);
    for m in mentions {
        if registry.government.contains(m) {
            gov = true;
        } else if registry.opposition.contains(m) {
            opp = true;
        } else {
            return PartyBucket::IndependentForeign;
        }
    }
    match (gov, opp) {
        (true, true) => PartyBucket::GovAndOpp,
        (true, false) => PartyBucket::Gov,
        (false, true) => PartyBucket::Opp,
        (false, false) => PartyBucket::None,
    }
}

/// The article attribute an NTD dimension partitions on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    SentimentBucket,
    PartyBucket,
    Category,
    /// A key of [`Article::attributes`].
    Custom(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtdBucket {
    pub label: String,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtdDimension {
    pub name: String,
    pub attribute: Attribute,
    pub buckets: Vec<NtdBucket>,
}

impl NtdDimension {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        attribute: Attribute,
        buckets: impl IntoIterator<Item = (S, f64)>,
    ) -> Self {
        Self {
            name: name.into(),
            attribute,
            buckets: buckets
                .into_iter()
                .map(|(label, proportion)| NtdBucket {
                    label: label.into(),
                    proportion,
                })
                .collect(),
        }
    }

    pub fn proportions(&self) -> Vec<f64> {
        self.buckets.iter().map(|b| b.proportion).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.buckets.iter().map(|b| b.label.clone()).collect()
    }

    fn position(&self, label: &str) -> Option<usize> {
        self.buckets.iter().position(|b| b.label == label)
    }

    /// Bucket index of an article in this dimension, `None` when the
    /// article's value is not covered by any bucket.
    pub fn bucket_of(&self, article: &Article, registry: &PartyRegistry) -> Option<usize> {
        match &self.attribute {
            Attribute::SentimentBucket => {
                let b = sentiment_bucket(article.sentiment_score).ok()?;
                self.position(SENTIMENT_LABELS[b as usize - 1])
            }
            Attribute::PartyBucket => {
                let b = party_bucket(article.party_mentions.iter().map(String::as_str), registry);
                self.position(b.label())
            }
            Attribute::Category => self.position(&article.category),
            Attribute::Custom(key) => self.position(article.attributes.get(key)?),
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let err = |msg: String| Err(CorpusError::InvalidNtd(format!("{}: {}", self.name, msg)));
        if self.buckets.is_empty() {
            return err("no buckets".into());
        }
        let mut seen = BTreeSet::new();
        let mut sum = 0.0;
        for b in &self.buckets {
            if !b.proportion.is_finite() || b.proportion < 0.0 {
                return err(format!("bucket {:?} has proportion {}", b.label, b.proportion));
            }
            if !seen.insert(b.label.as_str()) {
                return err(format!("bucket {:?} declared twice", b.label));
            }
            sum += b.proportion;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return err(format!("proportions sum to {sum}"));
        }
        // closed value spaces must be covered completely
        let required: &[&str] = match self.attribute {
            Attribute::SentimentBucket => &SENTIMENT_LABELS,
            Attribute::PartyBucket => &[
                "GOV",
                "OPP",
                "GOV_AND_OPP",
                "INDEPENDENT_FOREIGN",
                "NONE",
            ],
            _ => &[],
        };
        if !required.is_empty() {
            for label in &self.buckets {
                if !required.contains(&label.label.as_str()) {
                    return err(format!("unknown bucket label {:?}", label.label));
                }
            }
            for r in required {
                if !seen.contains(r) {
                    return err(format!("missing bucket {r:?}"));
                }
            }
        }
        Ok(())
    }
}

/// A normative target distribution over one or more attribute dimensions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NtdSpec {
    pub dimensions: Vec<NtdDimension>,
}

impl NtdSpec {
    pub fn new(dimensions: Vec<NtdDimension>) -> Result<Self, CorpusError> {
        let spec = Self { dimensions };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut names = BTreeSet::new();
        for d in &self.dimensions {
            if !names.insert(d.name.as_str()) {
                return Err(CorpusError::InvalidNtd(format!(
                    "dimension {:?} declared twice",
                    d.name
                )));
            }
            d.validate()?;
        }
        Ok(())
    }

    /// The deliberative configuration: sentiment 20/30/30/20 and party
    /// mentions 15/15/15/15/40.
    pub fn deliberative() -> Self {
        Self {
            dimensions: alloc::vec![
                NtdDimension::new(
                    "sentiment",
                    Attribute::SentimentBucket,
                    [("1", 0.2), ("2", 0.3), ("3", 0.3), ("4", 0.2)],
                ),
                NtdDimension::new(
                    "party",
                    Attribute::PartyBucket,
                    [
                        ("GOV", 0.15),
                        ("OPP", 0.15),
                        ("GOV_AND_OPP", 0.15),
                        ("INDEPENDENT_FOREIGN", 0.15),
                        ("NONE", 0.40),
                    ],
                ),
            ],
        }
    }

    pub fn dimension_index(&self, name: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d.name == name)
    }
}

/// Integer apportionment of `total` seats: floor every quota, then hand the
/// leftover units out by descending fractional part, earlier buckets first
/// on ties.
pub fn largest_remainder(proportions: &[f64], total: usize) -> Vec<usize> {
    if proportions.is_empty() {
        return Vec::new();
    }
    let mut counts = Vec::with_capacity(proportions.len());
    let mut fractions = Vec::with_capacity(proportions.len());
    for (i, &p) in proportions.iter().enumerate() {
        let mut quota = p * total as f64;
        // 0.3 * 20 must count as exactly 6
        let nearest = libm::round(quota);
        if (quota - nearest).abs() < 1e-9 {
            quota = nearest;
        }
        let floor = libm::floor(quota);
        counts.push(floor as usize);
        fractions.push((i, quota - floor));
    }
    let assigned: usize = counts.iter().sum();
    let mut leftover = total.saturating_sub(assigned);
    fractions.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, _) in fractions.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[*i] += 1;
        leftover -= 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledDimension {
    pub name: String,
    pub labels: Vec<String>,
    pub proportions: Vec<f64>,
    pub counts: Vec<usize>,
}

/// An NTD resolved to integer bucket counts for one list size.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledNtd {
    pub list_size: usize,
    pub dimensions: Vec<CompiledDimension>,
}

impl CompiledNtd {
    /// Re-rounds the original proportions for another list size.
    pub fn resized(&self, list_size: usize) -> Result<Self, CorpusError> {
        if list_size == 0 {
            return Err(CorpusError::ZeroListSize);
        }
        Ok(Self {
            list_size,
            dimensions: self
                .dimensions
                .iter()
                .map(|d| CompiledDimension {
                    name: d.name.clone(),
                    labels: d.labels.clone(),
                    proportions: d.proportions.clone(),
                    counts: largest_remainder(&d.proportions, list_size),
                })
                .collect(),
        })
    }
}

pub fn compile_ntd(spec: &NtdSpec, list_size: usize) -> Result<CompiledNtd, CorpusError> {
    if list_size == 0 {
        return Err(CorpusError::ZeroListSize);
    }
    spec.validate()?;
    Ok(CompiledNtd {
        list_size,
        dimensions: spec
            .dimensions
            .iter()
            .map(|d| {
                let proportions = d.proportions();
                CompiledDimension {
                    name: d.name.clone(),
                    labels: d.labels(),
                    counts: largest_remainder(&proportions, list_size),
                    proportions,
                }
            })
            .collect(),
    })
}

/// Precomputed bucket index of every corpus article in every NTD dimension.
#[derive(Debug, Clone)]
pub struct BucketTable {
    dims: usize,
    // row-major: article * dims + dimension
    cells: Vec<Option<u16>>,
}

impl BucketTable {
    pub fn new(corpus: &Corpus, spec: &NtdSpec, registry: &PartyRegistry) -> Self {
        let dims = spec.dimensions.len();
        let mut cells = Vec::with_capacity(corpus.len() * dims);
        for a in corpus.iter() {
            for d in &spec.dimensions {
                cells.push(d.bucket_of(a, registry).map(|b| b as u16));
            }
        }
        Self { dims, cells }
    }

    pub fn dimensions(&self) -> usize {
        self.dims
    }

    pub fn bucket(&self, article: usize, dimension: usize) -> Option<usize> {
        self.cells[article * self.dims + dimension].map(usize::from)
    }

    /// All buckets of one article, `None` if any dimension is uncovered.
    pub fn buckets(&self, article: usize) -> Option<Vec<usize>> {
        self.cells[article * self.dims..(article + 1) * self.dims]
            .iter()
            .map(|b| b.map(usize::from))
            .collect()
    }
}

impl core::fmt::Display for PartyBucket {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

impl core::str::FromStr for PartyBucket {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_label(s).ok_or_else(|| CorpusError::InvalidNtd(format!("unknown party bucket {s:?}")))
    }
}

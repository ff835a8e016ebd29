use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::divergence::{
    activation, alternative_voices, calibration, fragmentation, representation,
    CalibrationAttribute, MetricSettings,
};
use super::{auc, bucket_gini, one_hot_ild, MetricsError, ScoredImpression};
use crate::corpus::{BucketTable, Corpus, NtdSpec, PartyRegistry};

/// Everything the list metrics read besides the lists themselves.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationInput<'a> {
    pub corpus: &'a Corpus,
    pub registry: &'a PartyRegistry,
    pub spec: &'a NtdSpec,
    pub table: &'a BucketTable,
    /// Articles the lists were drawn from.
    pub pool: &'a [String],
    pub settings: &'a MetricSettings,
}

/// One report row. `None` marks a metric that could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    pub strategy: String,
    pub users: usize,
    pub activation: Option<f64>,
    pub calibration_category: Option<f64>,
    pub calibration_complexity: Option<f64>,
    /// Users left out of calibration for lack of history.
    pub calibration_excluded_users: usize,
    pub fragmentation: Option<f64>,
    pub alternative_voices: Option<f64>,
    pub representation: Option<f64>,
    /// Mean per-list Gini of bucket proportions, per NTD dimension.
    pub gini: BTreeMap<String, Option<f64>>,
    /// Mean per-list one-hot ILD, per NTD dimension.
    pub ild: BTreeMap<String, Option<f64>>,
    pub auc: Option<f64>,
    pub auc_impressions: usize,
    pub auc_skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_train_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_rec_seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategies: Vec<StrategyMetrics>,
}

impl MetricsReport {
    /// Names of the Gini/ILD dimensions, in order of first appearance.
    pub fn dimension_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for s in &self.strategies {
            for k in s.gini.keys().chain(s.ild.keys()) {
                if !names.contains(k) {
                    names.push(k.clone());
                }
            }
        }
        names
    }
}

/// Buckets of a list in one dimension, skipping uncovered articles.
pub(crate) fn list_buckets(
    input: &EvaluationInput<'_>,
    list: &[String],
    dim: usize,
) -> Result<Vec<usize>, MetricsError> {
    let mut out = Vec::with_capacity(list.len());
    for id in list {
        let ix = input
            .corpus
            .index_of(id)
            .ok_or_else(|| MetricsError::UnknownArticle(id.clone()))?;
        if let Some(b) = input.table.bucket(ix, dim) {
            out.push(b);
        }
    }
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn absent_if_no_lists<T>(r: Result<T, MetricsError>) -> Result<Option<T>, MetricsError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricsError::NoLists) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Computes every list metric for one strategy. `histories` is aligned with
/// `lists`; `impressions` feeds AUC and is `None` for strategies that do not
/// score impression items.
pub fn evaluate_lists(
    input: &EvaluationInput<'_>,
    strategy: &str,
    lists: &[Vec<String>],
    histories: &[Vec<String>],
    impressions: Option<&[ScoredImpression]>,
) -> Result<StrategyMetrics, MetricsError> {
    let s = input.settings;
    let category = calibration(input.corpus, lists, histories, CalibrationAttribute::Category, s)?;
    let complexity = calibration(input.corpus, lists, histories, CalibrationAttribute::Complexity, s)?;
    let mut gini = BTreeMap::new();
    let mut ild = BTreeMap::new();
    for (d, dim) in input.spec.dimensions.iter().enumerate() {
        let per_list: Vec<Vec<usize>> = lists
            .iter()
            .map(|l| list_buckets(input, l, d))
            .collect::<Result<_, _>>()?;
        let k = dim.buckets.len();
        gini.insert(
            dim.name.clone(),
            mean(per_list.iter().filter_map(|b| bucket_gini(b, k).ok())),
        );
        ild.insert(
            dim.name.clone(),
            mean(per_list.iter().filter_map(|b| one_hot_ild(b).ok())),
        );
    }
    let auc_result = impressions.map(auc);
    Ok(StrategyMetrics {
        strategy: strategy.into(),
        users: lists.len(),
        activation: absent_if_no_lists(activation(input.corpus, lists, input.pool, s))?,
        calibration_category: category.value,
        calibration_complexity: complexity.value,
        calibration_excluded_users: category.excluded,
        fragmentation: fragmentation(input.corpus, lists, s)?,
        alternative_voices: alternative_voices(input.corpus, lists, input.pool, s)?,
        representation: absent_if_no_lists(representation(
            input.corpus,
            input.registry,
            lists,
            input.pool,
            s,
        ))?,
        gini,
        ild,
        auc: auc_result.and_then(|r| r.value),
        auc_impressions: auc_result.map_or(0, |r| r.evaluated),
        auc_skipped: auc_result.map_or(0, |r| r.skipped),
        wall_clock_train_seconds: None,
        wall_clock_rec_seconds: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Article, NtdSpec};
    use alloc::format;
    use alloc::vec;

    #[test]
    fn ntd_exact_lists_hit_reference_values() {
        // 20 articles in the exact deliberative mix
        let registry = PartyRegistry::new(["G"], ["O"]).unwrap();
        let sentiments = [-0.8, -0.8, -0.8, -0.8, -0.3, -0.3, -0.3, -0.3, -0.3, -0.3, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.7, 0.7, 0.7, 0.7];
        let parties: [&[&str]; 5] = [&["G"], &["O"], &["G", "O"], &["X"], &[]];
        let counts = [3, 3, 3, 3, 8];
        let party_of: Vec<&[&str]> = counts
            .iter()
            .enumerate()
            .flat_map(|(b, &c)| core::iter::repeat_n(parties[b], c))
            .collect();
        let articles: Vec<Article> = (0..20)
            .map(|i| {
                let mut a = Article::new(format!("a{i:02}"), "c", sentiments[i]).with_parties(party_of[i].iter().copied());
                a.story_id = Some("s".into());
                a
            })
            .collect();
        let corpus = Corpus::new(articles).unwrap();
        let spec = NtdSpec::deliberative();
        let table = BucketTable::new(&corpus, &spec, &registry);
        let pool: Vec<String> = corpus.iter().map(|a| a.id.clone()).collect();
        let settings = MetricSettings::default();
        let input = EvaluationInput {
            corpus: &corpus,
            registry: &registry,
            spec: &spec,
            table: &table,
            pool: &pool,
            settings: &settings,
        };
        let lists = vec![pool.clone(); 2];
        let m = evaluate_lists(&input, "x", &lists, &lists, None).unwrap();
        let names: Vec<String> = spec.dimensions.iter().map(|d| d.name.clone()).collect();
        assert!((m.gini[&names[0]].unwrap() - 0.1333).abs() < 1e-3);
        assert!((m.gini[&names[1]].unwrap() - 0.25).abs() < 1e-3);
        assert!((m.ild[&names[0]].unwrap() - 0.7789).abs() < 1e-3);
        assert!((m.ild[&names[1]].unwrap() - 0.7895).abs() < 1e-3);
        assert_eq!(m.fragmentation, Some(0.0));
        assert_eq!(m.auc, None);
        assert_eq!(m.alternative_voices, None);
        assert_eq!(m.calibration_complexity, None);
        assert_eq!(m.calibration_category, Some(0.0));
    }
}

//! End-to-end experiment: graph construction, per-user recommendation for
//! each strategy, and evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use drdw_core::corpus::{BucketTable, Corpus};
use drdw_core::graph::{augment_cold_items, build_graph, BehaviorRecord, InteractionGraph, SimilarityIndex};
use drdw_core::metrics::{evaluate_lists, EvaluationInput, MetricsReport, ScoredImpression};
use drdw_core::rerank::{rank_by_score, rerank, RerankCandidate, RerankConfig};
use drdw_core::sampler::{DrdwEngine, SamplerStatus};
use drdw_core::{compile_ntd, filter_history, rdw_scores_with, ScoredItem, WalkScratch};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ExperimentConfig, Source, Strategy};
use crate::io::{self, ArticleFormat, IoError, RecommendationRow};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("graph: {0}")]
    Graph(String),
    #[error("{strategy} for user {user}: {message}")]
    User {
        strategy: String,
        user: String,
        message: String,
    },
    #[error("only {available} candidate articles for a list of {needed}")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("metrics for {strategy}: {message}")]
    Metrics { strategy: String, message: String },
    #[error("thread pool: {0}")]
    Threads(String),
}

/// Everything an experiment reads.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Corpus,
    pub behaviors: Vec<BehaviorRecord>,
    /// External model scores per user, if configured.
    pub external: Option<BTreeMap<String, Vec<ScoredItem>>>,
}

impl Dataset {
    pub fn load(config: &ExperimentConfig) -> Result<Self, PipelineError> {
        let format = ArticleFormat::from_path(&config.data.articles)?;
        let corpus = io::load_articles(&config.data.articles, format)?;
        let behaviors = io::load_behaviors(&config.data.behaviors)?;
        let external = match &config.data.external_scores {
            Some(p) => Some(io::ingest_external_scores(p, &corpus)?),
            None => None,
        };
        Ok(Self {
            corpus,
            behaviors,
            external,
        })
    }
}

/// One user's list under one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct UserList {
    pub user: String,
    pub items: Vec<ScoredItem>,
    /// Sampler outcome; only D-RDW lists carry one.
    pub status: Option<SamplerStatus>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub strategy: Strategy,
    pub lists: Vec<UserList>,
    pub train_seconds: f64,
    pub rec_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<RunRecord>,
    pub report: MetricsReport,
    pub graph: InteractionGraph,
}

/// Per-user view of the behavior log.
#[derive(Debug, Clone, Default)]
struct UserData {
    history: Vec<String>,
    impressions: Vec<Vec<(String, bool)>>,
}

fn aggregate(behaviors: &[BehaviorRecord]) -> BTreeMap<String, UserData> {
    let mut users: BTreeMap<String, UserData> = BTreeMap::new();
    for r in behaviors {
        let u = users.entry(r.user_id.clone()).or_default();
        for h in &r.history {
            if !u.history.contains(h) {
                u.history.push(h.clone());
            }
        }
        if !r.impressions.is_empty() {
            u.impressions
                .push(r.impressions.iter().map(|i| (i.article_id.clone(), i.clicked)).collect());
        }
    }
    users
}

/// Uniform sample of `list_size` articles from `pool` minus `history`, in
/// random order. Each item carries the uniform draw that placed it.
pub fn random_baseline(
    pool: &[String],
    list_size: usize,
    seed: u64,
    history: &BTreeSet<&str>,
) -> Result<Vec<ScoredItem>, PipelineError> {
    let mut candidates: Vec<&String> = pool.iter().filter(|a| !history.contains(a.as_str())).collect();
    if candidates.len() < list_size {
        return Err(PipelineError::PoolTooSmall {
            needed: list_size,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chosen, _) = candidates.partial_shuffle(&mut rng, list_size);
    let mut draws: Vec<f64> = (0..list_size).map(|_| rng.random::<f64>()).collect();
    draws.sort_by(|a, b| b.total_cmp(a));
    Ok(chosen
        .iter()
        .zip(draws)
        .map(|(id, s)| ScoredItem::new(id.as_str(), s))
        .collect())
}

/// Seed for one (strategy, user) pair.
fn user_seed(seed: u64, strategy: usize, user: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((strategy as u64) << 32) | user as u64);
    rng.random()
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    corpus: &'a Corpus,
    graph: &'a InteractionGraph,
    engine: &'a DrdwEngine<'a>,
    table: &'a BucketTable,
    pool: &'a [String],
    external: Option<&'a BTreeMap<String, Vec<ScoredItem>>>,
}

struct UserOutput {
    list: UserList,
    impressions: Vec<ScoredImpression>,
    auc_skipped: usize,
}

impl Context<'_> {
    fn rerank_candidates(&self, items: &[ScoredItem]) -> Vec<RerankCandidate> {
        items
            .iter()
            .map(|it| {
                let ix = self.corpus.index_of(&it.id);
                let dims = self.table.dimensions();
                let buckets = ix
                    .map(|a| (0..dims).map(|d| self.table.bucket(a, d).unwrap_or(usize::MAX)).collect())
                    .unwrap_or_else(|| vec![usize::MAX; dims]);
                RerankCandidate {
                    id: it.id.clone(),
                    score: it.score,
                    buckets,
                    embedding: ix.and_then(|a| self.corpus.articles()[a].embedding.clone()),
                }
            })
            .collect()
    }

    fn ranked(&self, strategy: Strategy, items: Vec<ScoredItem>) -> Result<Vec<ScoredItem>, String> {
        let n = self.config.drdw.list_size;
        let scores: BTreeMap<String, f64> = items.iter().map(|it| (it.id.clone(), it.score)).collect();
        let order = match strategy.rerank {
            None => {
                let ids: Vec<String> = items.iter().map(|it| it.id.clone()).collect();
                let mut order = rank_by_score(&ids, &scores).map_err(|e| e.to_string())?;
                order.truncate(n);
                order
            }
            Some(method) => {
                let mut items = items;
                if self.config.rerank.candidates > 0 {
                    items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
                    items.truncate(self.config.rerank.candidates);
                }
                if items.is_empty() {
                    return Ok(Vec::new());
                }
                let target = compile_ntd(&self.config.ntd, n).map_err(|e| e.to_string())?;
                let mut rc = RerankConfig::new(method, n, self.config.aspect_indices());
                rc.lambda = self.config.rerank.lambda;
                rc.similarity = self.config.rerank.similarity;
                rerank(&self.rerank_candidates(&items), &target, &rc).map_err(|e| e.to_string())?
            }
        };
        Ok(order
            .into_iter()
            .map(|id| {
                let s = scores[&id];
                ScoredItem::new(id, s)
            })
            .collect())
    }

    fn score_impressions(
        &self,
        data: &UserData,
        mut scores: impl FnMut(&str) -> Option<f64>,
    ) -> (Vec<ScoredImpression>, usize) {
        let mut out = Vec::new();
        let mut skipped = 0;
        for imp in &data.impressions {
            let scored: Option<Vec<f64>> = imp.iter().map(|(id, _)| scores(id)).collect();
            match scored {
                Some(scores) => out.push(ScoredImpression {
                    clicked: imp.iter().map(|(_, c)| *c).collect(),
                    scores,
                }),
                None => skipped += 1,
            }
        }
        (out, skipped)
    }

    fn recommend(
        &self,
        strategy: Strategy,
        strategy_ix: usize,
        user_ix: usize,
        user: &str,
        data: &UserData,
        scratch: &mut WalkScratch,
    ) -> Result<UserOutput, String> {
        let seed = user_seed(self.config.seed, strategy_ix, user_ix);
        let history: Vec<&str> = data.history.iter().map(String::as_str).collect();
        let wants_auc = strategy.rerank.is_none();
        let graph = self.graph;
        let (hops, beta) = (self.config.drdw.hops, self.config.drdw.beta);
        let walk = |scratch: &mut WalkScratch| {
            rdw_scores_with(graph, user, hops, beta, scratch).map_err(|e| e.to_string())
        };
        let (list, impressions, auc_skipped) = match strategy.source {
            Source::Drdw => {
                let rec = self
                    .engine
                    .recommend_excluding_with(user, &history, seed, scratch)
                    .map_err(|e| e.to_string())?;
                let ws = walk(scratch)?;
                let (imps, skipped) =
                    self.score_impressions(data, |id| Some(self.graph.item_ix(id).and_then(|i| ws.get(i)).unwrap_or(0.0)));
                let items = rec.items.into_iter().map(|it| ScoredItem::new(it.id, it.score)).collect();
                (
                    UserList {
                        user: user.into(),
                        items,
                        status: Some(rec.status),
                    },
                    imps,
                    skipped,
                )
            }
            Source::Rdw => {
                let ws = walk(scratch)?;
                let (imps, skipped) =
                    self.score_impressions(data, |id| Some(self.graph.item_ix(id).and_then(|i| ws.get(i)).unwrap_or(0.0)));
                let ws = filter_history(ws, self.graph, history.iter().copied());
                let candidates = ws
                    .scored_items(self.graph)
                    .into_iter()
                    .filter(|it| self.corpus.index_of(&it.id).is_some())
                    .collect();
                let items = self.ranked(strategy, candidates)?;
                (
                    UserList {
                        user: user.into(),
                        items,
                        status: None,
                    },
                    imps,
                    skipped,
                )
            }
            Source::Random => {
                let hist: BTreeSet<&str> = history.iter().copied().collect();
                let items = random_baseline(self.pool, self.config.drdw.list_size, seed, &hist)
                    .map_err(|e| e.to_string())?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
                let (imps, skipped) = self.score_impressions(data, |_| Some(rng.random::<f64>()));
                (
                    UserList {
                        user: user.into(),
                        items,
                        status: None,
                    },
                    imps,
                    skipped,
                )
            }
            Source::External => {
                let all = self.external.and_then(|e| e.get(user));
                let lookup: BTreeMap<&str, f64> = all
                    .map(|v| v.iter().rev().map(|it| (it.id.as_str(), it.score)).collect())
                    .unwrap_or_default();
                let (imps, skipped) = self.score_impressions(data, |id| lookup.get(id).copied());
                let hist: BTreeSet<&str> = history.iter().copied().collect();
                let mut seen = BTreeSet::new();
                let candidates: Vec<ScoredItem> = all
                    .into_iter()
                    .flatten()
                    .filter(|it| !hist.contains(it.id.as_str()) && seen.insert(it.id.as_str()))
                    .cloned()
                    .collect();
                let items = self.ranked(strategy, candidates)?;
                (
                    UserList {
                        user: user.into(),
                        items,
                        status: None,
                    },
                    imps,
                    skipped,
                )
            }
        };
        let (impressions, auc_skipped) = if wants_auc { (impressions, auc_skipped) } else { (Vec::new(), 0) };
        Ok(UserOutput {
            list,
            impressions,
            auc_skipped,
        })
    }
}

/// Builds the interaction graph the walks run on: histories, clicked
/// impressions unless held out, and borrowed edges for cold articles.
pub fn train_graph(config: &ExperimentConfig, data: &Dataset) -> Result<InteractionGraph, PipelineError> {
    let corpus = &data.corpus;
    let graph = if config.holdout_impressions {
        let records: Vec<BehaviorRecord> = data
            .behaviors
            .iter()
            .map(|r| BehaviorRecord {
                user_id: r.user_id.clone(),
                history: r.history.clone(),
                impressions: Vec::new(),
                timestamp: r.timestamp,
            })
            .collect();
        build_graph(&records)
    } else {
        build_graph(&data.behaviors)
    };
    if config.cold_start_neighbors == 0 || corpus.embedding_dim().is_none() {
        return Ok(graph);
    }
    let index = SimilarityIndex::new(&graph, corpus);
    augment_cold_items(graph, corpus, &index, config.cold_start_neighbors).map_err(|e| PipelineError::Graph(e.to_string()))
}

/// Per-user reading histories, restricted to corpus articles.
pub fn user_histories(data: &Dataset) -> BTreeMap<String, Vec<String>> {
    aggregate(&data.behaviors)
        .into_iter()
        .map(|(u, d)| {
            let h = d.history.into_iter().filter(|h| data.corpus.index_of(h).is_some()).collect();
            (u, h)
        })
        .collect()
}

/// Metrics for lists read back from a recommendations file. AUC is left
/// absent because the file holds no impression scores.
pub fn evaluate_rows(
    config: &ExperimentConfig,
    data: &Dataset,
    strategy: &str,
    rows: &[RecommendationRow],
) -> Result<drdw_core::metrics::StrategyMetrics, PipelineError> {
    let mut by_user: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
    for r in rows {
        by_user.entry(&r.user).or_default().push((r.rank, &r.article));
    }
    let histories = user_histories(data);
    let mut lists = Vec::with_capacity(by_user.len());
    let mut hist = Vec::with_capacity(by_user.len());
    for (user, mut items) in by_user {
        items.sort();
        lists.push(items.into_iter().map(|(_, a)| a.to_string()).collect());
        hist.push(histories.get(user).cloned().unwrap_or_default());
    }
    let table = BucketTable::new(&data.corpus, &config.ntd, &config.registry);
    let pool: Vec<String> = data.corpus.iter().map(|a| a.id.clone()).collect();
    let input = EvaluationInput {
        corpus: &data.corpus,
        registry: &config.registry,
        spec: &config.ntd,
        table: &table,
        pool: &pool,
        settings: &config.metrics,
    };
    evaluate_lists(&input, strategy, &lists, &hist, None).map_err(|e| PipelineError::Metrics {
        strategy: strategy.into(),
        message: e.to_string(),
    })
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::Threads(e.to_string()))
}

/// Loads the configured files and runs every strategy.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, PipelineError> {
    config.validate()?;
    let data = Dataset::load(config)?;
    run_on(config, &data)
}

/// Runs every configured strategy over every user with at least one
/// interaction in the graph. Users are processed in id order.
pub fn run_on(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentOutput, PipelineError> {
    config.validate()?;
    let corpus = &data.corpus;
    let users = aggregate(&data.behaviors);

    let train_start = Instant::now();
    let graph = train_graph(config, data)?;
    let engine = DrdwEngine::new(&graph, corpus, &config.registry, &config.ntd, config.drdw.clone()).map_err(|e| {
        PipelineError::Graph(e.to_string())
    })?;
    let train_seconds = train_start.elapsed().as_secs_f64();

    let table = BucketTable::new(corpus, &config.ntd, &config.registry);
    let pool: Vec<String> = corpus.iter().map(|a| a.id.clone()).collect();
    let active: Vec<(&String, &UserData)> = users.iter().filter(|(u, _)| graph.user_ix(u).is_some()).collect();
    let histories: Vec<Vec<String>> = active
        .iter()
        .map(|(_, d)| d.history.iter().filter(|h| corpus.index_of(h).is_some()).cloned().collect())
        .collect();
    let ctx = Context {
        config,
        corpus,
        graph: &graph,
        engine: &engine,
        table: &table,
        pool: &pool,
        external: data.external.as_ref(),
    };
    let workers = thread_pool(config.threads)?;
    let input = EvaluationInput {
        corpus,
        registry: &config.registry,
        spec: &config.ntd,
        table: &table,
        pool: &pool,
        settings: &config.metrics,
    };

    let mut runs = Vec::with_capacity(config.strategies.len());
    let mut report = MetricsReport::default();
    for (k, strategy) in config.strategies.iter().copied().enumerate() {
        let rec_start = Instant::now();
        let outputs: Vec<UserOutput> = workers.install(|| {
            active
                .par_iter()
                .enumerate()
                .map_init(WalkScratch::new, |scratch, (i, (user, d))| {
                    ctx.recommend(strategy, k, i, user, d, scratch).map_err(|message| PipelineError::User {
                        strategy: strategy.to_string(),
                        user: (*user).clone(),
                        message,
                    })
                })
                .collect::<Result<_, _>>()
        })?;
        let rec_seconds = rec_start.elapsed().as_secs_f64();

        let lists: Vec<Vec<String>> = outputs
            .iter()
            .map(|o| o.list.items.iter().map(|it| it.id.clone()).collect())
            .collect();
        let impressions: Vec<ScoredImpression> = outputs.iter().flat_map(|o| o.impressions.iter().cloned()).collect();
        let scored = strategy.rerank.is_none();
        let mut metrics = evaluate_lists(
            &input,
            &strategy.to_string(),
            &lists,
            &histories,
            scored.then_some(impressions.as_slice()),
        )
        .map_err(|e| PipelineError::Metrics {
            strategy: strategy.to_string(),
            message: e.to_string(),
        })?;
        metrics.auc_skipped += outputs.iter().map(|o| o.auc_skipped).sum::<usize>();
        let train = match strategy.source {
            Source::Drdw | Source::Rdw => train_seconds,
            Source::Random | Source::External => 0.0,
        };
        metrics.wall_clock_train_seconds = Some(train);
        metrics.wall_clock_rec_seconds = Some(rec_seconds);
        report.strategies.push(metrics);
        runs.push(RunRecord {
            strategy,
            lists: outputs.into_iter().map(|o| o.list).collect(),
            train_seconds: train,
            rec_seconds,
        });
    }
    drop(engine);
    Ok(ExperimentOutput { runs, report, graph })
}

/// Rows of a recommendations file for one run.
pub fn recommendation_rows(run: &RunRecord) -> Vec<RecommendationRow> {
    run.lists
        .iter()
        .flat_map(|l| {
            let status = l.status.map_or_else(|| io::ABSENT.to_string(), |s| s.to_string());
            l.items.iter().enumerate().map(move |(r, it)| RecommendationRow {
                user: l.user.clone(),
                rank: r + 1,
                article: it.id.clone(),
                score: it.score,
                status: status.clone(),
            })
        })
        .collect()
}

/// Writes `recommendations.<strategy>.tsv`, `metrics.tsv`, `metrics.json`
/// and `timings.tsv` into `dir`, plus `graph.tsv` when requested. Only
/// `timings.tsv` depends on the machine unless `report_timings` is set.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, output: &ExperimentOutput) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(IoError::from)?;
    for run in &output.runs {
        let path = dir.join(format!("recommendations.{}.tsv", run.strategy));
        io::write_recommendations(&path, &recommendation_rows(run))?;
    }
    let mut report = output.report.clone();
    if !config.report_timings {
        for m in &mut report.strategies {
            m.wall_clock_train_seconds = None;
            m.wall_clock_rec_seconds = None;
        }
    }
    io::write_metrics_table(&dir.join("metrics.tsv"), &report, config.report_timings)?;
    io::write_metrics_json(&dir.join("metrics.json"), &report)?;
    let mut timings = String::from("strategy\ttrain_seconds\trec_seconds\n");
    for run in &output.runs {
        timings.push_str(&format!("{}\t{:.6}\t{:.6}\n", run.strategy, run.train_seconds, run.rec_seconds));
    }
    io::write_text(&dir.join("timings.tsv"), &timings)?;
    if config.dump_graph {
        io::write_text(&dir.join("graph.tsv"), &output.graph.dump())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("a{i}")).collect()
    }

    #[test]
    fn random_baseline_excludes_history_and_repeats() {
        let p = pool(30);
        let hist: BTreeSet<&str> = ["a0", "a1", "a2"].into();
        let a = random_baseline(&p, 10, 9, &hist).unwrap();
        let b = random_baseline(&p, 10, 9, &hist).unwrap();
        assert_eq!(a, b);
        let ids: BTreeSet<&str> = a.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids.len(), 10);
        assert!(ids.is_disjoint(&hist));
        assert!(a.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn random_baseline_exact_pool_is_a_permutation() {
        let p = pool(5);
        let hist = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for seed in 0..50 {
            let out = random_baseline(&p, 5, seed, &hist).unwrap();
            let mut ids: Vec<String> = out.iter().map(|i| i.id.clone()).collect();
            seen.insert(ids.clone());
            ids.sort();
            assert_eq!(ids, p);
        }
        assert!(seen.len() > 1);
        assert!(matches!(
            random_baseline(&p, 6, 0, &hist),
            Err(PipelineError::PoolTooSmall { needed: 6, available: 5 })
        ));
    }

    #[test]
    fn user_seeds_differ() {
        assert_ne!(user_seed(1, 0, 0), user_seed(1, 0, 1));
        assert_ne!(user_seed(1, 0, 0), user_seed(1, 1, 0));
        assert_eq!(user_seed(1, 2, 3), user_seed(1, 2, 3));
    }
}

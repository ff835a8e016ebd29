use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;

use drdw::config::{ExperimentConfig, Strategy};
use drdw::pipeline::{self, Dataset, PipelineError};
use drdw::synth::{generate_synthetic, SynthConfig};
use drdw_core::corpus::Corpus;
use drdw_core::metrics::gini;
use drdw_core::sampler::SamplerStatus;
use drdw_core::ScoredItem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(articles: usize, users: usize, seed: u64) -> (ExperimentConfig, Dataset) {
    let data = generate_synthetic(&SynthConfig {
        articles,
        users,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let corpus = Corpus::new(data.articles).unwrap();
    let mut config = ExperimentConfig::new("articles.jsonl", "behaviors.jsonl");
    config.registry = data.registry;
    config.seed = seed;
    let dataset = Dataset {
        corpus,
        behaviors: data.behaviors,
        external: None,
    };
    (config, dataset)
}

fn strategies(names: &[&str]) -> Vec<Strategy> {
    names.iter().map(|n| n.parse().unwrap()).collect()
}

fn external_scores(data: &Dataset, per_user: usize, seed: u64) -> BTreeMap<String, Vec<ScoredItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<&str> = data.corpus.iter().map(|a| a.id.as_str()).collect();
    let users: BTreeSet<&str> = data.behaviors.iter().map(|b| b.user_id.as_str()).collect();
    users
        .into_iter()
        .map(|u| {
            let items = (0..per_user)
                .map(|_| ScoredItem::new(ids[rng.random_range(0..ids.len())], rng.random()))
                .collect();
            (u.to_string(), items)
        })
        .collect()
}

#[test]
fn drdw_meets_the_target_for_every_user() {
    let (mut config, data) = dataset(2000, 300, 1);
    config.strategies = strategies(&["drdw"]);
    let out = pipeline::run_on(&config, &data).unwrap();
    let run = &out.runs[0];
    assert_eq!(run.lists.len(), 300);
    assert!(run.lists.iter().all(|l| l.status == Some(SamplerStatus::FullSet) && l.items.len() == 20));
    let m = &out.report.strategies[0];
    assert!((m.gini["sentiment"].unwrap() - 2.0 / 15.0).abs() < 1e-3);
    assert!((m.gini["party"].unwrap() - 0.25).abs() < 1e-3);
    assert!((m.ild["sentiment"].unwrap() - 148.0 / 190.0).abs() < 1e-3);
    assert!((m.ild["party"].unwrap() - 150.0 / 190.0).abs() < 1e-3);
}

#[test]
fn no_list_contains_history_under_any_strategy() {
    let (mut config, mut data) = dataset(1000, 120, 2);
    data.external = Some(external_scores(&data, 80, 3));
    config.data.external_scores = Some("scores.csv".into());
    config.strategies = strategies(&[
        "drdw",
        "rdw",
        "random",
        "external",
        "external+gkl",
        "external+pm2",
        "external+mmr",
        "rdw+pm2",
    ]);
    for holdout in [true, false] {
        config.holdout_impressions = holdout;
        let out = pipeline::run_on(&config, &data).unwrap();
        let histories = pipeline::user_histories(&data);
        for run in &out.runs {
            for list in &run.lists {
                assert!(list.items.len() <= config.drdw.list_size);
                let h: BTreeSet<&str> = histories[&list.user].iter().map(String::as_str).collect();
                let ids: BTreeSet<&str> = list.items.iter().map(|i| i.id.as_str()).collect();
                assert_eq!(ids.len(), list.items.len(), "{} repeats an item", run.strategy);
                assert!(ids.is_disjoint(&h), "{} recommends history to {}", run.strategy, list.user);
            }
        }
        // every metric column is present or explicitly absent for every strategy
        assert_eq!(out.report.strategies.len(), config.strategies.len());
        for m in &out.report.strategies {
            assert_eq!(m.gini.len(), 2);
            assert!(m.activation.is_some() && m.representation.is_some());
            if m.strategy.contains('+') {
                assert_eq!((m.auc, m.auc_impressions), (None, 0));
            } else if !m.strategy.starts_with("external") {
                assert!(m.auc.is_some());
            }
        }
    }
}

#[test]
fn random_lists_mirror_the_pool_categories() {
    let (mut config, data) = dataset(3000, 1000, 4);
    config.strategies = strategies(&["random"]);
    let out = pipeline::run_on(&config, &data).unwrap();
    let cats: BTreeSet<&str> = data.corpus.iter().map(|a| a.category.as_str()).collect();
    let share = |counts: &BTreeMap<&str, f64>| {
        let total: f64 = counts.values().sum();
        cats.iter().map(|c| counts.get(c).copied().unwrap_or(0.0) / total).collect::<Vec<f64>>()
    };
    let mut pool = BTreeMap::new();
    for a in data.corpus.iter() {
        *pool.entry(a.category.as_str()).or_insert(0.0) += 1.0;
    }
    let mut listed = BTreeMap::new();
    let run = &out.runs[0];
    assert_eq!(run.lists.len(), 1000);
    for l in &run.lists {
        for it in &l.items {
            let a = data.corpus.get(&it.id).unwrap();
            *listed.entry(a.category.as_str()).or_insert(0.0) += 1.0;
        }
    }
    let pool_gini = gini(&share(&pool)).unwrap();
    let list_gini = gini(&share(&listed)).unwrap();
    assert!((pool_gini - list_gini).abs() <= 0.05, "pool {pool_gini} lists {list_gini}");
}

#[test]
fn same_seed_same_records() {
    let (mut config, data) = dataset(800, 100, 5);
    config.strategies = strategies(&["drdw", "rdw", "random"]);
    config.threads = 3;
    let a = pipeline::run_on(&config, &data).unwrap();
    let b = pipeline::run_on(&config, &data).unwrap();
    for (x, y) in a.runs.iter().zip(&b.runs) {
        assert_eq!(x.lists, y.lists);
    }
    config.seed += 1;
    let c = pipeline::run_on(&config, &data).unwrap();
    assert_ne!(a.runs[2].lists, c.runs[2].lists);
}

#[test]
fn errors_name_strategy_and_user() {
    let (mut config, mut data) = dataset(300, 10, 6);
    config.drdw.list_size = 299;
    config.strategies = strategies(&["random"]);
    let err = pipeline::run_on(&config, &data).unwrap_err();
    assert!(matches!(err, PipelineError::User { ref strategy, .. } if strategy == "random"), "{err}");
    config.drdw.list_size = 20;
    config.strategies = strategies(&["external"]);
    config.data.external_scores = Some("scores.csv".into());
    data.external = Some(BTreeMap::new());
    let out = pipeline::run_on(&config, &data).unwrap();
    // users without external scores get empty lists and unscored impressions
    assert!(out.runs[0].lists.iter().all(|l| l.items.is_empty()));
    assert_eq!(out.report.strategies[0].auc, None);
}

#[test]
fn cli_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_drdw");
    let run = |args: &[&str]| {
        let out = Command::new(exe).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let d = dir.path().to_str().unwrap();
    run(&["synth", "--out", d, "--articles", "600", "--users", "60", "--seed", "3"]);
    let config = dir.path().join("config.toml");
    let c = config.to_str().unwrap();
    let table = run(&["run", "--config", c, "--threads", "2"]);
    assert!(table.starts_with("strategy\t"));
    assert_eq!(table.lines().count(), 4);
    let recs = dir.path().join("out/recommendations.drdw.tsv");
    let eval = run(&["evaluate", "--config", c, "--recs", recs.to_str().unwrap()]);
    let drdw_row = table.lines().nth(1).unwrap();
    let eval_row = eval.lines().nth(1).unwrap();
    // same list metrics; the file carries no impression scores, so AUC is absent
    let cells = |row: &str| row.split('\t').skip(1).take(10).map(String::from).collect::<Vec<_>>();
    assert_eq!(cells(drdw_row), cells(eval_row));
    assert!(eval_row.contains("NA"));
    let sample = run(&["sample", "--config", c, "--user", "U000001"]);
    assert!(sample.starts_with("status\tFULL_SET"));
    let walk = run(&["walk", "--config", c, "--user", "U000001", "--top", "5"]);
    assert_eq!(walk.lines().count(), 5);
    let bad = Command::new(exe).args(["sample", "--config", c, "--user", "nobody"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nobody"));
}

//! Wall-clock sanity check: recommendation time grows linearly with the
//! number of users when the corpus grows with them.

use std::time::Instant;

use drdw::config::ExperimentConfig;
use drdw::pipeline::{self, Dataset};
use drdw::synth::{generate_synthetic, SynthConfig};
use drdw_core::corpus::Corpus;

fn seconds_per_user(users: usize) -> f64 {
    let data = generate_synthetic(&SynthConfig {
        articles: users * 5 / 2,
        users,
        seed: 21,
        impressions_per_user: 0,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut config = ExperimentConfig::new("articles.jsonl", "behaviors.jsonl");
    config.registry = data.registry;
    config.strategies = vec!["drdw".parse().unwrap()];
    config.threads = 1;
    let dataset = Dataset {
        corpus: Corpus::new(data.articles).unwrap(),
        behaviors: data.behaviors,
        external: None,
    };
    // best of three damps scheduler noise
    (0..3)
        .map(|_| {
            let start = Instant::now();
            let out = pipeline::run_on(&config, &dataset).unwrap();
            let total = out.runs[0].rec_seconds;
            assert!(start.elapsed().as_secs_f64() >= total);
            total / users as f64
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn recommendation_time_is_linear_in_users() {
    let sizes = [500, 1000, 2000, 4000];
    let per_user: Vec<f64> = sizes.iter().map(|&n| seconds_per_user(n)).collect();
    let mean = per_user.iter().sum::<f64>() / per_user.len() as f64;
    for (n, t) in sizes.iter().zip(&per_user) {
        eprintln!("{n} users: {:.3} ms per user", t * 1e3);
    }
    for (n, t) in sizes.iter().zip(&per_user) {
        assert!((t / mean - 1.0).abs() <= 0.25, "{n} users: {t:e} s/user vs mean {mean:e}");
    }
}

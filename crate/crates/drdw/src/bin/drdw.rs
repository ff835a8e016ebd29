//! Command-line front end.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use drdw::config::ExperimentConfig;
use drdw::io::{self, ArticleFormat};
use drdw::pipeline::{self, Dataset};
use drdw::synth::{generate_synthetic, SynthConfig};
use drdw_core::metrics::MetricsReport;
use drdw_core::sampler::DrdwEngine;
use drdw_core::{rdw_scores, BucketTable};

#[derive(Parser)]
#[command(name = "drdw", version, about = "Diversity-driven random-walk news recommendation")]
struct Cli {
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured worker count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured strategy and write lists and metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score an existing recommendations file.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        recs: PathBuf,
        /// Row label in the printed table; defaults to the file stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Show one user's D-RDW selection against the target counts.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        user: String,
    },
    /// Print the top walk scores of one user.
    Walk {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 3)]
        hops: u32,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Write a synthetic dataset and a matching configuration.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        articles: usize,
        #[arg(long, default_value_t = 200)]
        users: usize,
    },
}

impl Cli {
    fn config(&self, path: &Path) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(path)?;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(t) = self.threads {
            c.threads = t;
        }
        if let Some(o) = &self.output {
            c.output = o.clone();
        }
        Ok(c)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { config } => {
            let config = cli.config(config)?;
            let out = pipeline::run_experiment(&config)?;
            pipeline::write_outputs(&config.output, &config, &out)?;
            print!("{}", io::metrics_table(&out.report, config.report_timings));
            eprintln!("wrote {}", config.output.display());
        }
        Command::Evaluate { config, recs, name } => {
            let config = cli.config(config)?;
            let data = Dataset::load(&config)?;
            let rows = io::read_recommendations(recs)?;
            let name = name.clone().unwrap_or_else(|| {
                recs.file_stem()
                    .map_or_else(|| "lists".into(), |s| s.to_string_lossy().into_owned())
            });
            let metrics = pipeline::evaluate_rows(&config, &data, &name, &rows)?;
            let report = MetricsReport {
                strategies: vec![metrics],
            };
            print!("{}", io::metrics_table(&report, false));
        }
        Command::Sample { config, user } => {
            let config = cli.config(config)?;
            let data = Dataset::load(&config)?;
            let graph = pipeline::train_graph(&config, &data)?;
            let engine = DrdwEngine::new(&graph, &data.corpus, &config.registry, &config.ntd, config.drdw.clone())?;
            let histories = pipeline::user_histories(&data);
            let history: Vec<&str> = histories
                .get(user)
                .map(|h| h.iter().map(String::as_str).collect())
                .unwrap_or_default();
            let rec = engine
                .recommend_excluding(user, &history, config.seed)
                .with_context(|| format!("user {user}"))?;
            println!("status\t{}\thops\t{}", rec.status, rec.hops);
            for (r, it) in rec.items.iter().enumerate() {
                let fill = if it.filled { "\tfilled" } else { "" };
                println!("{}\t{}\t{:.6e}{fill}", r + 1, it.id, it.score);
            }
            let table = BucketTable::new(&data.corpus, &config.ntd, &config.registry);
            for (d, dim) in engine.compiled().dimensions.iter().enumerate() {
                let mut got = vec![0usize; dim.counts.len()];
                for it in &rec.items {
                    if let Some(b) = data.corpus.index_of(&it.id).and_then(|a| table.bucket(a, d)) {
                        got[b] += 1;
                    }
                }
                println!("{}", config.ntd.dimensions[d].name);
                for (b, label) in dim.labels.iter().enumerate() {
                    println!("  {label}\t{}/{}", got[b], dim.counts[b]);
                }
            }
        }
        Command::Walk { config, user, hops, top } => {
            let config = cli.config(config)?;
            let data = Dataset::load(&config)?;
            let graph = pipeline::train_graph(&config, &data)?;
            let ws = rdw_scores(&graph, user, *hops, config.drdw.beta)?;
            let mut items = ws.scored_items(&graph);
            items.truncate(*top);
            for it in items {
                println!("{}\t{:.6e}", it.id, it.score);
            }
        }
        Command::Synth { out, articles, users } => {
            let synth = SynthConfig {
                articles: *articles,
                users: *users,
                seed: cli.seed.unwrap_or(0),
                ..SynthConfig::default()
            };
            let data = generate_synthetic(&synth)?;
            if data.articles.is_empty() {
                bail!("no articles generated");
            }
            std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
            io::save_articles(&out.join("articles.jsonl"), &data.articles, ArticleFormat::Jsonl)?;
            io::save_behaviors(&out.join("behaviors.jsonl"), &data.behaviors)?;
            let mut config = ExperimentConfig::new("articles.jsonl", "behaviors.jsonl");
            config.registry = data.registry;
            config.seed = synth.seed;
            io::write_text(&out.join("config.toml"), &config.to_toml())?;
            eprintln!("wrote {}", out.display());
        }
    }
    Ok(())
}

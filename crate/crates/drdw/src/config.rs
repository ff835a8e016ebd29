//! Experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use drdw_core::corpus::{NtdSpec, PartyRegistry};
use drdw_core::metrics::MetricSettings;
use drdw_core::rerank::{MmrSimilarity, RerankMethod};
use drdw_core::sampler::DrdwConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Where a strategy's scores come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    /// Random walk followed by NTD-constrained selection.
    Drdw,
    /// Random walk scores, optionally popularity discounted.
    Rdw,
    /// Uniform random lists.
    Random,
    /// Scores from an external model file.
    External,
}

/// A strategy name such as `drdw`, `rdw`, `random` or `external+gkl`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strategy {
    pub source: Source,
    pub rerank: Option<RerankMethod>,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let source = match self.source {
            Source::Drdw => "drdw",
            Source::Rdw => "rdw",
            Source::Random => "random",
            Source::External => "external",
        };
        f.write_str(source)?;
        match self.rerank {
            None | Some(RerankMethod::Score) => Ok(()),
            Some(RerankMethod::Gkl) => f.write_str("+gkl"),
            Some(RerankMethod::Pm2) => f.write_str("+pm2"),
            Some(RerankMethod::Mmr) => f.write_str("+mmr"),
        }
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let unknown = || ConfigError::UnknownStrategy(s.into());
        let (source, method) = match s.split_once('+') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let source = match source {
            "drdw" | "d-rdw" => Source::Drdw,
            "rdw" => Source::Rdw,
            "random" => Source::Random,
            "external" => Source::External,
            _ => return Err(unknown()),
        };
        let rerank = match method {
            None => None,
            Some("gkl") => Some(RerankMethod::Gkl),
            Some("pm2") => Some(RerankMethod::Pm2),
            Some("mmr") => Some(RerankMethod::Mmr),
            Some(_) => return Err(unknown()),
        };
        if rerank.is_some() && !matches!(source, Source::Rdw | Source::External) {
            return Err(unknown());
        }
        Ok(Self { source, rerank })
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub articles: PathBuf,
    pub behaviors: PathBuf,
    /// `user_id, article_id, score` rows for the external strategies.
    #[serde(default)]
    pub external_scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankSettings {
    pub lambda: f64,
    /// NTD dimension names the re-rankers balance; empty means all.
    pub aspects: Vec<String>,
    pub similarity: MmrSimilarity,
    /// External candidates kept per user before re-ranking; 0 keeps all.
    pub candidates: usize,
}

impl Default for RerankSettings {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            aspects: Vec::new(),
            similarity: MmrSimilarity::OneHot,
            candidates: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub registry: PartyRegistry,
    #[serde(default = "NtdSpec::deliberative")]
    pub ntd: NtdSpec,
    #[serde(default)]
    pub drdw: DrdwConfig,
    #[serde(default)]
    pub rerank: RerankSettings,
    #[serde(default)]
    pub metrics: MetricSettings,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Warm neighbours each cold article borrows users from.
    #[serde(default = "default_cold_k")]
    pub cold_start_neighbors: usize,
    /// Keep impressions out of the graph so they can serve as held-out
    /// AUC data.
    #[serde(default = "yes")]
    pub holdout_impressions: bool,
    /// Write wall-clock columns into the metrics table.
    #[serde(default)]
    pub report_timings: bool,
    #[serde(default)]
    pub dump_graph: bool,
}

fn default_strategies() -> Vec<Strategy> {
    vec![
        Strategy { source: Source::Drdw, rerank: None },
        Strategy { source: Source::Rdw, rerank: None },
        Strategy { source: Source::Random, rerank: None },
    ]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_cold_k() -> usize {
    3
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// A configuration with defaults everywhere but the data files.
    pub fn new(articles: impl Into<PathBuf>, behaviors: impl Into<PathBuf>) -> Self {
        Self {
            data: DataConfig {
                articles: articles.into(),
                behaviors: behaviors.into(),
                external_scores: None,
            },
            registry: PartyRegistry::default(),
            ntd: NtdSpec::deliberative(),
            drdw: DrdwConfig::default(),
            rerank: RerankSettings::default(),
            metrics: MetricSettings::default(),
            strategies: default_strategies(),
            seed: 0,
            threads: 0,
            output: default_output(),
            cold_start_neighbors: default_cold_k(),
            holdout_impressions: true,
            report_timings: false,
            dump_graph: false,
        }
    }

    /// Reads a TOML file. Relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let read_err = |message: String| ConfigError::Read {
            path: path.into(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let mut config: Self = toml::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut config.data.articles);
        rebase(&mut config.data.behaviors);
        if let Some(p) = config.data.external_scores.as_mut() {
            rebase(p);
        }
        rebase(&mut config.output);
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.drdw.validate().map_err(|e| invalid(e.to_string()))?;
        self.ntd.validate().map_err(|e| invalid(e.to_string()))?;
        self.registry.validate().map_err(|e| invalid(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.rerank.lambda) {
            return Err(invalid("rerank.lambda must lie in [0, 1]".into()));
        }
        for a in &self.rerank.aspects {
            if self.ntd.dimension_index(a).is_none() {
                return Err(invalid(format!("rerank aspect {a:?} is not an NTD dimension")));
            }
        }
        if self.strategies.is_empty() {
            return Err(invalid("no strategies configured".into()));
        }
        if self.strategies.iter().any(|s| s.source == Source::External) && self.data.external_scores.is_none() {
            return Err(invalid("external strategies need data.external_scores".into()));
        }
        if self.metrics.epsilon.is_nan() || self.metrics.epsilon < 0.0 {
            return Err(invalid("metrics.epsilon must be non-negative".into()));
        }
        Ok(())
    }

    /// Indices of the re-ranking aspects in the NTD.
    pub fn aspect_indices(&self) -> Vec<usize> {
        if self.rerank.aspects.is_empty() {
            (0..self.ntd.dimensions.len()).collect()
        } else {
            self.rerank
                .aspects
                .iter()
                .filter_map(|a| self.ntd.dimension_index(a))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for name in ["drdw", "rdw", "random", "external", "external+gkl", "external+pm2", "rdw+mmr"] {
            let s: Strategy = name.parse().unwrap();
            assert_eq!(s.to_string(), name);
        }
        assert!("drdw+gkl".parse::<Strategy>().is_err());
        assert!("lstur".parse::<Strategy>().is_err());
        assert!("external+xyz".parse::<Strategy>().is_err());
    }

    #[test]
    fn loads_minimal_file_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(
            &path,
            "seed = 7\nstrategies = [\"drdw\", \"random\"]\n[data]\narticles = \"a.jsonl\"\nbehaviors = \"b.jsonl\"\n[registry]\ngovernment = [\"G\"]\nopposition = [\"O\"]\n",
        )
        .unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.drdw.list_size, 20);
        assert_eq!(c.drdw.max_hops, 9);
        assert_eq!(c.data.articles, dir.path().join("a.jsonl"));
        assert_eq!(c.ntd, NtdSpec::deliberative());
        assert_eq!(c.rerank.lambda, 0.5);
        let again: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ExperimentConfig::new("a.jsonl", "b.jsonl");
        c.drdw.hops = 2;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new("a.jsonl", "b.jsonl");
        c.strategies = vec!["external".parse().unwrap()];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new("a.jsonl", "b.jsonl");
        c.rerank.aspects = vec!["mood".into()];
        assert!(c.validate().is_err());
    }
}

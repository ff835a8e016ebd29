//! File formats: articles (JSON lines or CSV), behaviors (JSON lines),
//! external model scores, recommendation lists and metric reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use drdw_core::corpus::{Article, Corpus, CorpusError};
use drdw_core::graph::BehaviorRecord;
use drdw_core::metrics::MetricsReport;
use drdw_core::ScoredItem;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: CorpusError },
    #[error("{path}:{line}: unknown article {id:?}")]
    UnknownArticle { path: PathBuf, line: usize, id: String },
    #[error("cannot tell the format of {0}; use .jsonl or .csv")]
    UnknownFormat(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|source| IoError::Open {
        path: path.into(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| IoError::Open {
        path: path.into(),
        source,
    })
}

fn parse_error(path: &Path, line: usize, message: impl ToString) -> IoError {
    IoError::Parse {
        path: path.into(),
        line,
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArticleFormat {
    Jsonl,
    Csv,
}

impl ArticleFormat {
    pub fn from_path(path: &Path) -> Result<Self, IoError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json" | "ndjson") => Ok(Self::Jsonl),
            Some("csv") => Ok(Self::Csv),
            _ => Err(IoError::UnknownFormat(path.into())),
        }
    }
}

/// Reads JSON values, one per non-blank line.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_error(path, n + 1, e))?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<(), IoError> {
    let mut w = create(path)?;
    for v in values {
        serde_json::to_writer(&mut w, v).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

const CSV_COLUMNS: [&str; 10] = [
    "id",
    "category",
    "sentiment_score",
    "party_mentions",
    "complexity",
    "story_id",
    "published_at",
    "embedding",
    "minority_mentions",
    "majority_mentions",
];

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, column: &str, value: &str) -> Result<Option<T>, IoError>
where
    T::Err: std::fmt::Display,
{
    let value = value.trim();
    if value.is_empty() {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|e| parse_error(path, line, format!("column {column}: {e}")))
}

fn article_from_csv(path: &Path, line: usize, headers: &csv::StringRecord, row: &csv::StringRecord) -> Result<Article, IoError> {
    let mut fields: BTreeMap<&str, &str> = headers.iter().zip(row.iter()).collect();
    let mut take = |name: &str| fields.remove(name).unwrap_or("");
    let id = take("id").trim().to_string();
    if id.is_empty() {
        return Err(parse_error(path, line, "missing id"));
    }
    let sentiment: f64 = parse_field(path, line, "sentiment_score", take("sentiment_score"))?
        .ok_or_else(|| parse_error(path, line, "missing sentiment_score"))?;
    let mut a = Article::new(id, take("category").trim(), sentiment);
    a.party_mentions = take("party_mentions")
        .split('|')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(String::from)
        .collect();
    a.complexity = parse_field(path, line, "complexity", take("complexity"))?;
    a.story_id = Some(take("story_id").trim()).filter(|s| !s.is_empty()).map(String::from);
    a.published_at = parse_field(path, line, "published_at", take("published_at"))?;
    let embedding = take("embedding");
    if !embedding.trim().is_empty() {
        let values = embedding
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_error(path, line, format!("column embedding: {e}")))?;
        a.embedding = Some(values);
    }
    a.minority_mentions = parse_field(path, line, "minority_mentions", take("minority_mentions"))?;
    a.majority_mentions = parse_field(path, line, "majority_mentions", take("majority_mentions"))?;
    a.attributes = fields
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Ok(a)
}

fn read_articles_csv(path: &Path) -> Result<Vec<Article>, IoError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| parse_error(path, 1, e))?.clone();
    let mut out = Vec::new();
    for (n, row) in reader.records().enumerate() {
        // header is line 1
        let line = n + 2;
        let row = row.map_err(|e| parse_error(path, line, e))?;
        out.push(article_from_csv(path, line, &headers, &row)?);
    }
    Ok(out)
}

fn write_articles_csv(path: &Path, articles: &[Article]) -> Result<(), IoError> {
    let extra: Vec<String> = articles
        .iter()
        .flat_map(|a| a.attributes.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut w = csv::Writer::from_writer(create(path)?);
    let header: Vec<&str> = CSV_COLUMNS.iter().copied().chain(extra.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(std::io::Error::from)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for a in articles {
        let mut row = vec![
            a.id.clone(),
            a.category.clone(),
            a.sentiment_score.to_string(),
            a.party_mentions.iter().cloned().collect::<Vec<_>>().join("|"),
            opt(a.complexity.map(|x| x.to_string())),
            opt(a.story_id.clone()),
            opt(a.published_at.map(|x| x.to_string())),
            opt(a.embedding.as_ref().map(|e| e.iter().map(f64::to_string).collect::<Vec<_>>().join(" "))),
            opt(a.minority_mentions.map(|x| x.to_string())),
            opt(a.majority_mentions.map(|x| x.to_string())),
        ];
        row.extend(extra.iter().map(|k| a.attributes.get(k).cloned().unwrap_or_default()));
        w.write_record(&row).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads and validates an article corpus.
pub fn load_articles(path: &Path, format: ArticleFormat) -> Result<Corpus, IoError> {
    let articles = match format {
        ArticleFormat::Jsonl => read_jsonl(path)?,
        ArticleFormat::Csv => read_articles_csv(path)?,
    };
    Corpus::new(articles).map_err(|source| IoError::Corpus {
        path: path.into(),
        source,
    })
}

pub fn save_articles(path: &Path, articles: &[Article], format: ArticleFormat) -> Result<(), IoError> {
    match format {
        ArticleFormat::Jsonl => write_jsonl(path, articles),
        ArticleFormat::Csv => write_articles_csv(path, articles),
    }
}

pub fn load_behaviors(path: &Path) -> Result<Vec<BehaviorRecord>, IoError> {
    read_jsonl(path)
}

pub fn save_behaviors(path: &Path, behaviors: &[BehaviorRecord]) -> Result<(), IoError> {
    write_jsonl(path, behaviors)
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    user_id: String,
    article_id: String,
    score: f64,
}

/// Reads externally produced `user_id, article_id, score` rows (CSV with a
/// header, or tab separated when the file ends in `.tsv`) and groups them
/// per user in file order.
pub fn ingest_external_scores(path: &Path, corpus: &Corpus) -> Result<BTreeMap<String, Vec<ScoredItem>>, IoError> {
    let delimiter = if path.extension().is_some_and(|e| e == "tsv") { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(open(path)?);
    let mut out: BTreeMap<String, Vec<ScoredItem>> = BTreeMap::new();
    for (n, row) in reader.deserialize::<ScoreRow>().enumerate() {
        let line = n + 2;
        let row = row.map_err(|e| parse_error(path, line, e))?;
        if !row.score.is_finite() {
            return Err(parse_error(path, line, "score is not finite"));
        }
        if corpus.index_of(&row.article_id).is_none() {
            return Err(IoError::UnknownArticle {
                path: path.into(),
                line,
                id: row.article_id,
            });
        }
        out.entry(row.user_id)
            .or_default()
            .push(ScoredItem::new(row.article_id, row.score));
    }
    Ok(out)
}

/// One line of a recommendations file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRow {
    pub user: String,
    /// 1-based.
    pub rank: usize,
    pub article: String,
    pub score: f64,
    pub status: String,
}

/// Tab-separated `user rank article score status`, with a header.
pub fn write_recommendations(path: &Path, rows: &[RecommendationRow]) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_recommendations(path: &Path) -> Result<Vec<RecommendationRow>, IoError> {
    let mut reader = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(open(path)?);
    reader
        .deserialize()
        .enumerate()
        .map(|(n, r)| r.map_err(|e| parse_error(path, n + 2, e)))
        .collect()
}

/// Marker written for metrics that could not be computed.
pub const ABSENT: &str = "NA";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |x| format!("{x:.6}"))
}

/// Renders the report as a tab-separated table, one row per strategy.
/// Timing columns are included only when `with_timings` is set, so the
/// default table is reproducible byte for byte.
pub fn metrics_table(report: &MetricsReport, with_timings: bool) -> String {
    let dims = report.dimension_names();
    let mut header = vec![
        "strategy".to_string(),
        "users".into(),
        "activation".into(),
        "calibration_category".into(),
        "calibration_complexity".into(),
        "fragmentation".into(),
        "alternative_voices".into(),
        "representation".into(),
    ];
    header.extend(dims.iter().map(|d| format!("gini_{d}")));
    header.extend(dims.iter().map(|d| format!("ild_{d}")));
    header.extend(["auc", "auc_impressions", "auc_skipped", "calibration_excluded_users"].map(String::from));
    if with_timings {
        header.extend(["wall_clock_train_seconds", "wall_clock_rec_seconds"].map(String::from));
    }
    let mut out = header.join("\t");
    out.push('\n');
    for s in &report.strategies {
        let mut row = vec![
            s.strategy.clone(),
            s.users.to_string(),
            cell(s.activation),
            cell(s.calibration_category),
            cell(s.calibration_complexity),
            cell(s.fragmentation),
            cell(s.alternative_voices),
            cell(s.representation),
        ];
        row.extend(dims.iter().map(|d| cell(s.gini.get(d).copied().flatten())));
        row.extend(dims.iter().map(|d| cell(s.ild.get(d).copied().flatten())));
        row.push(cell(s.auc));
        row.push(s.auc_impressions.to_string());
        row.push(s.auc_skipped.to_string());
        row.push(s.calibration_excluded_users.to_string());
        if with_timings {
            row.push(cell(s.wall_clock_train_seconds));
            row.push(cell(s.wall_clock_rec_seconds));
        }
        let _ = writeln!(out, "{}", row.join("\t"));
    }
    out
}

pub fn write_metrics_table(path: &Path, report: &MetricsReport, with_timings: bool) -> Result<(), IoError> {
    let mut w = create(path)?;
    w.write_all(metrics_table(report, with_timings).as_bytes())?;
    w.flush()?;
    Ok(())
}

/// The report as pretty JSON; absent metrics appear as `null`.
pub fn write_metrics_json(path: &Path, report: &MetricsReport) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, report).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_metrics_json(path: &Path) -> Result<MetricsReport, IoError> {
    serde_json::from_reader(open(path)?).map_err(|e| parse_error(path, e.line(), e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

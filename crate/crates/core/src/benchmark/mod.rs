//! Benchmark harness: labeled query groups, per-query metrics and reports.
//!
//! A benchmark file is JSON:
//!
//! ```text
//! {"groups": [{"group_id": "modus-tollens",
//!              "queries": [{"text": "Modus Tollens", "category": "theorem_name"}, ...],
//!              "labels": [{"theorem_id": "mt", "label": 2}, ...]}]}
//! ```
//!
//! Every query in a group shares the group's labels; theorems without a label
//! are irrelevant.

mod bm25;
pub mod metrics;
mod report;
mod runfile;

pub use bm25::{tokenize, Bm25Index, Bm25Params, EmptyCorpus};
pub use metrics::{dcg_at_k, ndcg_at_k, precision_at_k, recall_at_k, relevance_score, IdcgMode, Labels};
pub use report::{render_table, CategoryMetrics, MetricTriple, MetricsReport, QueryMetrics};
pub use runfile::{RunEntry, RunFile};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryCategory {
    #[serde(rename = "natural_description", alias = "ND")]
    NaturalDescription,
    #[serde(rename = "latex_formula", alias = "LF")]
    LatexFormula,
    #[serde(rename = "theorem_name", alias = "TN")]
    TheoremName,
    #[serde(rename = "lean4_term", alias = "LT")]
    Lean4Term,
}

impl QueryCategory {
    pub const ALL: [QueryCategory; 4] = [
        QueryCategory::NaturalDescription,
        QueryCategory::LatexFormula,
        QueryCategory::TheoremName,
        QueryCategory::Lean4Term,
    ];

    pub fn abbrev(self) -> &'static str {
        match self {
            QueryCategory::NaturalDescription => "ND",
            QueryCategory::LatexFormula => "LF",
            QueryCategory::TheoremName => "TN",
            QueryCategory::Lean4Term => "LT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchQuery {
    pub text: String,
    pub category: QueryCategory,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryGroup {
    pub group_id: String,
    pub queries: Vec<BenchQuery>,
    pub labels: Labels,
}

#[derive(Deserialize)]
struct WireLabel {
    theorem_id: String,
    label: u8,
}

#[derive(Deserialize)]
struct WireGroup {
    group_id: String,
    queries: Vec<BenchQuery>,
    labels: Vec<WireLabel>,
}

#[derive(Deserialize)]
struct WireBenchmark {
    groups: Vec<WireGroup>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("cannot read benchmark {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("benchmark schema error: {0}")]
    Schema(String),
    #[error("group `{group}`: {message}")]
    Invalid { group: String, message: String },
}

pub fn load_benchmark(path: impl AsRef<Path>) -> Result<Vec<QueryGroup>, BenchmarkError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| BenchmarkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_benchmark(&text)
}

pub fn parse_benchmark(text: &str) -> Result<Vec<QueryGroup>, BenchmarkError> {
    let wire: WireBenchmark =
        serde_json::from_str(text).map_err(|e| BenchmarkError::Schema(e.to_string()))?;
    let mut seen_groups = HashSet::new();
    let mut groups = Vec::with_capacity(wire.groups.len());
    for g in wire.groups {
        let invalid = |message: String| BenchmarkError::Invalid {
            group: g.group_id.clone(),
            message,
        };
        if !seen_groups.insert(g.group_id.clone()) {
            return Err(invalid("duplicate group_id".into()));
        }
        if g.queries.len() < 2 {
            return Err(invalid(format!("needs at least 2 queries, has {}", g.queries.len())));
        }
        let mut categories = HashSet::new();
        for q in &g.queries {
            if q.text.trim().is_empty() {
                return Err(invalid("empty query text".into()));
            }
            if !categories.insert(q.category) {
                return Err(invalid(format!("category {} used twice", q.category.abbrev())));
            }
        }
        let mut labels = HashMap::new();
        for l in &g.labels {
            if l.label > 2 {
                return Err(invalid(format!("label {} for `{}` is not 0, 1 or 2", l.label, l.theorem_id)));
            }
            if labels.insert(l.theorem_id.clone(), l.label).is_some() {
                return Err(invalid(format!("theorem `{}` labeled twice", l.theorem_id)));
            }
        }
        if !labels.values().any(|&l| l == metrics::EXACT_MATCH) {
            return Err(invalid("no exact-match (label 2) theorem".into()));
        }
        groups.push(QueryGroup {
            group_id: g.group_id,
            queries: g.queries,
            labels,
        });
    }
    Ok(groups)
}

pub type EngineError = Box<dyn std::error::Error + Send + Sync>;

/// Anything that maps a query to an ordered list of theorem ids.
pub trait RankingEngine {
    fn rank(&self, query: &str, depth: usize) -> Result<Vec<String>, EngineError>;
}

impl<F> RankingEngine for F
where
    F: Fn(&str, usize) -> Result<Vec<String>, EngineError>,
{
    fn rank(&self, query: &str, depth: usize) -> Result<Vec<String>, EngineError> {
        self(query, depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalConfig {
    pub precision_k: usize,
    pub recall_k: usize,
    pub ndcg_k: usize,
    pub idcg_mode: IdcgMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            precision_k: 10,
            recall_k: 10,
            ndcg_k: 20,
            idcg_mode: IdcgMode::Retrieved,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("engine failed on query {query:?} (group `{group_id}`): {source}")]
pub struct EvalError {
    pub group_id: String,
    pub query: String,
    #[source]
    pub source: EngineError,
}

/// Runs every query of every group through `engine` and scores it against
/// its group's labels.
pub fn evaluate(
    engine: &dyn RankingEngine,
    groups: &[QueryGroup],
    cfg: &EvalConfig,
) -> Result<MetricsReport, EvalError> {
    let depth = cfg.precision_k.max(cfg.recall_k).max(cfg.ndcg_k);
    let mut per_query = Vec::new();
    for group in groups {
        for q in &group.queries {
            let raw = engine.rank(&q.text, depth).map_err(|source| EvalError {
                group_id: group.group_id.clone(),
                query: q.text.clone(),
                source,
            })?;
            let mut seen = HashSet::new();
            let ranking: Vec<String> = raw.into_iter().filter(|id| seen.insert(id.clone())).collect();
            per_query.push(QueryMetrics {
                group_id: group.group_id.clone(),
                query: q.text.clone(),
                category: q.category,
                metrics: MetricTriple {
                    ndcg: ndcg_at_k(&ranking, &group.labels, cfg.ndcg_k, cfg.idcg_mode),
                    precision: precision_at_k(&ranking, &group.labels, cfg.precision_k),
                    recall: recall_at_k(&ranking, &group.labels, cfg.recall_k),
                },
            });
        }
    }
    let overall = MetricTriple::mean(per_query.iter().map(|q| &q.metrics));
    let mut per_category = BTreeMap::new();
    for cat in QueryCategory::ALL {
        let rows: Vec<&MetricTriple> = per_query
            .iter()
            .filter(|q| q.category == cat)
            .map(|q| &q.metrics)
            .collect();
        if !rows.is_empty() {
            per_category.insert(
                cat,
                CategoryMetrics {
                    queries: rows.len(),
                    metrics: MetricTriple::mean(rows.into_iter()),
                },
            );
        }
    }
    Ok(MetricsReport {
        config: *cfg,
        queries: per_query.len(),
        overall,
        per_category,
        per_query,
    })
}

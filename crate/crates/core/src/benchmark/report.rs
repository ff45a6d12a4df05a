use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::{EvalConfig, QueryCategory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricTriple {
    pub ndcg: f64,
    pub precision: f64,
    pub recall: f64,
}

impl MetricTriple {
    pub(crate) fn mean<'a>(rows: impl Iterator<Item = &'a MetricTriple>) -> MetricTriple {
        let mut sum = MetricTriple { ndcg: 0.0, precision: 0.0, recall: 0.0 };
        let mut n = 0usize;
        for r in rows {
            sum.ndcg += r.ndcg;
            sum.precision += r.precision;
            sum.recall += r.recall;
            n += 1;
        }
        if n == 0 {
            return sum;
        }
        let n = n as f64;
        MetricTriple {
            ndcg: sum.ndcg / n,
            precision: sum.precision / n,
            recall: sum.recall / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryMetrics {
    pub group_id: String,
    pub query: String,
    pub category: QueryCategory,
    #[serde(flatten)]
    pub metrics: MetricTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryMetrics {
    pub queries: usize,
    #[serde(flatten)]
    pub metrics: MetricTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub config: EvalConfig,
    pub queries: usize,
    pub overall: MetricTriple,
    pub per_category: BTreeMap<QueryCategory, CategoryMetrics>,
    pub per_query: Vec<QueryMetrics>,
}

/// Plain-text summary: one row for all queries, then one per category.
pub fn render_table(report: &MetricsReport, engine: &str) -> String {
    let c = &report.config;
    let mut out = String::new();
    let _ = writeln!(out, "engine: {engine}   idcg: {:?}", c.idcg_mode);
    let header = [
        format!("nDCG@{}", c.ndcg_k),
        format!("P@{}", c.precision_k),
        format!("R@{}", c.recall_k),
    ];
    let _ = writeln!(
        out,
        "{:<10}{:>8}{:>10}{:>10}{:>10}",
        "category", "queries", header[0], header[1], header[2]
    );
    let mut row = |name: &str, n: usize, m: &MetricTriple| {
        let _ = writeln!(
            out,
            "{:<10}{:>8}{:>10.3}{:>10.3}{:>10.3}",
            name, n, m.ndcg, m.precision, m.recall
        );
    };
    row("All", report.queries, &report.overall);
    for (cat, m) in &report.per_category {
        row(cat.abbrev(), m.queries, &m.metrics);
    }
    out.push_str("note: per-category means are fixture-scale and depend on this benchmark's query mix\n");
    out
}

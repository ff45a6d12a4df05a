//! Search result rendering shared by `mathsearch search` and the HTTP
//! service, so `--json` output and `/search` bodies carry the same content.

use std::fmt::Write;

use mathsearch::query::SearchOutcome;
use mathsearch::{AugmentedQuery, TheoremRecord};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultItem {
    pub rank: usize,
    pub theorem_id: String,
    pub name: String,
    pub formal_statement: String,
    pub informal_name: Option<String>,
    pub informal_statement: Option<String>,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResponse {
    pub results: Vec<ResultItem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augmented_query: Option<AugmentedQuery>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

impl SearchResponse {
    pub fn from_outcome(outcome: SearchOutcome) -> Self {
        SearchResponse {
            results: outcome
                .results
                .into_iter()
                .map(|r| ResultItem {
                    rank: r.rank,
                    theorem_id: r.theorem.id,
                    name: r.theorem.name,
                    formal_statement: r.theorem.formal_statement,
                    informal_name: r.informal.as_ref().map(|p| p.informal_name.clone()),
                    informal_statement: r.informal.map(|p| p.informal_statement),
                    score: r.score,
                })
                .collect(),
            augmented_query: outcome.augmented,
            timing_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremView<'a> {
    pub id: &'a str,
    pub name: &'a str,
    pub kind: mathsearch::TheoremKind,
    pub formal_statement: &'a str,
    pub docstring: Option<&'a str>,
    pub source_path: &'a str,
    pub dependencies: Vec<&'a str>,
    pub informal_name: Option<&'a str>,
    pub informal_statement: Option<&'a str>,
}

impl<'a> TheoremView<'a> {
    pub fn new(record: &'a TheoremRecord, informal: Option<&'a mathsearch::InformalPair>) -> Self {
        TheoremView {
            id: &record.id,
            name: &record.name,
            kind: record.kind,
            formal_statement: &record.formal_statement,
            docstring: record.docstring.as_deref(),
            source_path: &record.source_path,
            dependencies: record.dependencies.iter().map(|d| d.name.as_str()).collect(),
            informal_name: informal.map(|p| p.informal_name.as_str()),
            informal_statement: informal.map(|p| p.informal_statement.as_str()),
        }
    }
}

fn clip(s: &str, width: usize) -> String {
    let one_line = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if one_line.chars().count() <= width {
        one_line
    } else {
        let mut out: String = one_line.chars().take(width.saturating_sub(1)).collect();
        out.push('…');
        out
    }
}

/// Human-readable table: rank, name, score, informal name.
pub fn render_table(response: &SearchResponse) -> String {
    let mut out = String::new();
    if let Some(aq) = &response.augmented_query {
        if aq.augmented {
            let _ = writeln!(out, "augmented: {} | {}", clip(&aq.informal_name, 40), clip(&aq.formal_statement, 60));
        }
    }
    let _ = writeln!(out, "{:>4}  {:<44}  {:>7}  {}", "rank", "name", "score", "informal name");
    for r in &response.results {
        let _ = writeln!(
            out,
            "{:>4}  {:<44}  {:>7.4}  {}",
            r.rank,
            clip(&r.name, 44),
            r.score,
            clip(r.informal_name.as_deref().unwrap_or("-"), 60)
        );
    }
    if response.results.is_empty() {
        out.push_str("(no results)\n");
    }
    out
}

//! Rank metrics over graded labels.
//!
//! Label 2 ("exact match") scores 1.0, label 1 ("relevant") 0.3, anything
//! else or unlabeled 0. Precision and recall count exact matches only.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub type Labels = HashMap<String, u8>;

pub const EXACT_MATCH: u8 = 2;
pub const RELEVANT: u8 = 1;

/// Gain for a label.
pub fn relevance_score(label: Option<u8>) -> f64 {
    match label {
        Some(EXACT_MATCH) => 1.0,
        Some(RELEVANT) => 0.3,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdcgMode {
    /// Ideal = best rearrangement of the retrieved list itself.
    #[default]
    Retrieved,
    /// Ideal = best arrangement of every labeled item for the query.
    Global,
}

impl std::str::FromStr for IdcgMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "retrieved" => Ok(IdcgMode::Retrieved),
            "global" => Ok(IdcgMode::Global),
            other => Err(format!("unknown idcg mode `{other}` (expected retrieved or global)")),
        }
    }
}

fn exact_hits<S: AsRef<str>>(ranking: &[S], labels: &Labels, k: usize) -> usize {
    ranking
        .iter()
        .take(k)
        .filter(|id| labels.get(id.as_ref()) == Some(&EXACT_MATCH))
        .count()
}

/// Exact matches among the first `k` positions, divided by `k`. Positions
/// past the end of the ranking count as misses.
pub fn precision_at_k<S: AsRef<str>>(ranking: &[S], labels: &Labels, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    exact_hits(ranking, labels, k) as f64 / k as f64
}

/// Exact matches among the first `k` positions, divided by the number of
/// exact matches in `labels`. Zero when there are none.
pub fn recall_at_k<S: AsRef<str>>(ranking: &[S], labels: &Labels, k: usize) -> f64 {
    let sigma = labels.values().filter(|&&l| l == EXACT_MATCH).count();
    if sigma == 0 {
        return 0.0;
    }
    exact_hits(ranking, labels, k) as f64 / sigma as f64
}

fn dcg_of(gains: impl Iterator<Item = f64>, k: usize) -> f64 {
    gains
        .take(k)
        .enumerate()
        .map(|(j, g)| g / ((j + 2) as f64).log2())
        .sum()
}

pub fn dcg_at_k<S: AsRef<str>>(ranking: &[S], labels: &Labels, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    dcg_of(
        ranking.iter().map(|id| relevance_score(labels.get(id.as_ref()).copied())),
        k,
    )
}

pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], labels: &Labels, k: usize, mode: IdcgMode) -> f64 {
    let dcg = dcg_at_k(ranking, labels, k);
    let mut ideal: Vec<f64> = match mode {
        IdcgMode::Retrieved => ranking
            .iter()
            .map(|id| relevance_score(labels.get(id.as_ref()).copied()))
            .collect(),
        IdcgMode::Global => labels.values().map(|&l| relevance_score(Some(l))).collect(),
    };
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg_of(ideal.into_iter(), k);
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

//! Approximate nearest-neighbour search over unit vectors.
//!
//! [`HnswIndex`] is a hierarchical navigable small-world graph scored by dot
//! product, which equals cosine similarity for the unit vectors it stores.
//! [`brute_force_search`] is the exact oracle it is audited against.

mod hnsw;
mod persist;

pub use hnsw::{HnswIndex, HnswParams};
pub use persist::{PersistError, FORMAT_VERSION, MAGIC};

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::embedding::dot;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("index is empty")]
    Empty,
    #[error("vector dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("id `{0}` is already in the index")]
    DuplicateId(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f32,
}

/// Descending score, then ascending id.
pub fn hit_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

pub(crate) fn clamp_score(s: f32) -> f32 {
    s.clamp(-1.0, 1.0)
}

/// Exact top-`k` by dot product, sorted by [`hit_order`].
pub fn brute_force_search<'a, I>(items: I, query: &[f32], k: usize) -> Result<Vec<SearchHit>, IndexError>
where
    I: IntoIterator<Item = (&'a str, &'a [f32])>,
{
    if k == 0 {
        return Err(IndexError::ZeroK);
    }
    let mut hits = Vec::new();
    for (id, v) in items {
        if v.len() != query.len() {
            return Err(IndexError::DimensionMismatch {
                expected: v.len(),
                got: query.len(),
            });
        }
        hits.push(SearchHit {
            id: id.to_string(),
            score: clamp_score(dot(v, query)),
        });
    }
    if hits.is_empty() {
        return Err(IndexError::Empty);
    }
    hits.sort_by(hit_order);
    hits.truncate(k);
    Ok(hits)
}

/// Fraction of the exact top-`k` ids present in the approximate top-`k`.
pub fn recall_at_k(approx: &[SearchHit], exact: &[SearchHit], k: usize) -> f64 {
    let denom = k.min(exact.len());
    if denom == 0 {
        return 0.0;
    }
    let truth: HashSet<&str> = exact.iter().take(k).map(|h| h.id.as_str()).collect();
    let found = approx
        .iter()
        .take(k)
        .filter(|h| truth.contains(h.id.as_str()))
        .count();
    found as f64 / denom as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hits(ids: &[&str]) -> Vec<SearchHit> {
        ids.iter()
            .map(|id| SearchHit {
                id: id.to_string(),
                score: 0.0,
            })
            .collect()
    }

    #[test]
    fn brute_force_examples() {
        let a = [0.9f32, (1.0f32 - 0.81).sqrt()];
        let b = [0.1f32, (1.0f32 - 0.01).sqrt()];
        let items = [("a", &a[..]), ("b", &b[..])];
        let top = brute_force_search(items, &[1.0, 0.0], 1).unwrap();
        assert_eq!(top[0].id, "a");
        let all = brute_force_search(items, &[1.0, 0.0], 10).unwrap();
        assert_eq!(all.len(), 2);

        let same = [1.0f32, 0.0];
        let tied = [("z", &same[..]), ("m", &same[..])];
        let ids: Vec<_> = brute_force_search(tied, &[1.0, 0.0], 2)
            .unwrap()
            .into_iter()
            .map(|h| h.id)
            .collect();
        assert_eq!(ids, vec!["m", "z"]);
    }

    #[test]
    fn brute_force_errors() {
        let none: [(&str, &[f32]); 0] = [];
        assert_eq!(brute_force_search(none, &[1.0], 1), Err(IndexError::Empty));
        let v = [1.0f32];
        assert_eq!(brute_force_search([("a", &v[..])], &[1.0], 0), Err(IndexError::ZeroK));
    }

    #[test]
    fn recall_examples() {
        let ten: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let ten: Vec<&str> = ten.iter().map(String::as_str).collect();
        assert_eq!(recall_at_k(&hits(&ten), &hits(&ten), 10), 1.0);
        assert_eq!(recall_at_k(&hits(&["x", "y"]), &hits(&["a", "b"]), 2), 0.0);
        let approx = hits(&["0", "1", "2", "3", "4", "5", "6", "x", "y", "z"]);
        assert!((recall_at_k(&approx, &hits(&ten), 10) - 0.7).abs() < 1e-12);
        assert_eq!(recall_at_k(&hits(&["a"]), &hits(&["a"]), 10), 1.0);
    }
}

//! Okapi BM25 lexical baseline.

use std::collections::HashMap;

use super::RankingEngine;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Lowercased runs of alphanumeric characters; no stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot build a BM25 index over an empty corpus")]
pub struct EmptyCorpus;

#[derive(Debug, Clone)]
pub struct Bm25Index {
    ids: Vec<String>,
    doc_len: Vec<u32>,
    avg_len: f64,
    /// term → (document, term frequency)
    postings: HashMap<String, Vec<(u32, u32)>>,
    params: Bm25Params,
}

impl Bm25Index {
    pub fn new<I, S, T>(docs: I, params: Bm25Params) -> Result<Self, EmptyCorpus>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut ids = Vec::new();
        let mut doc_len = Vec::new();
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        for (doc, (id, text)) in docs.into_iter().enumerate() {
            let tokens = tokenize(text.as_ref());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((doc as u32, count));
            }
            ids.push(id.into());
            doc_len.push(tokens.len() as u32);
        }
        if ids.is_empty() {
            return Err(EmptyCorpus);
        }
        let avg_len = doc_len.iter().map(|&l| f64::from(l)).sum::<f64>() / ids.len() as f64;
        Ok(Bm25Index {
            ids,
            doc_len,
            avg_len,
            postings,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `ln(1 + (N − n + 0.5) / (n + 0.5))` for a term in `n` documents.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.postings.get(term).map_or(0, Vec::len) as f64;
        let total = self.ids.len() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    /// Score of every document, in insertion order. Each query token
    /// occurrence contributes, so repeated query terms weigh more.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let Bm25Params { k1, b } = self.params;
        let mut scores = vec![0.0; self.ids.len()];
        for term in tokenize(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            let idf = self.idf(&term);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let ratio = if self.avg_len > 0.0 {
                    f64::from(self.doc_len[doc as usize]) / self.avg_len
                } else {
                    1.0
                };
                scores[doc as usize] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * ratio));
            }
        }
        scores
    }

    /// Top `k` `(id, score)` by descending score, ties by ascending id.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let scores = self.scores(query);
        let mut order: Vec<usize> = (0..self.ids.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| self.ids[a].cmp(&self.ids[b]))
        });
        order
            .into_iter()
            .take(k)
            .map(|i| (self.ids[i].clone(), scores[i]))
            .collect()
    }
}

impl RankingEngine for Bm25Index {
    fn rank(&self, query: &str, depth: usize) -> Result<Vec<String>, super::EngineError> {
        Ok(self.search(query, depth).into_iter().map(|(id, _)| id).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("Nat.Prime p → ∃ q, q > p"), vec!["nat", "prime", "p", "q", "q", "p"]);
        assert!(tokenize("  ,,, ").is_empty());
    }

    #[test]
    fn single_term_in_one_average_length_doc() {
        let idx = Bm25Index::new(
            [("a", "alpha beta"), ("b", "gamma delta"), ("c", "epsilon zeta")],
            Bm25Params::default(),
        )
        .unwrap();
        let hits = idx.search("alpha", 3);
        assert_eq!(hits[0].0, "a");
        assert!((hits[0].1 - 0.980829).abs() < 1e-6);
        assert_eq!(hits[1], ("b".to_string(), 0.0));
    }

    #[test]
    fn unknown_terms_rank_by_id() {
        let idx = Bm25Index::new([("z", "x"), ("a", "y"), ("m", "w")], Bm25Params::default()).unwrap();
        let ids: Vec<_> = idx.search("nothing here", 3).into_iter().map(|h| h.0).collect();
        assert_eq!(ids, vec!["a", "m", "z"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let docs: Vec<(String, String)> = vec![];
        assert!(Bm25Index::new(docs, Bm25Params::default()).is_err());
    }
}

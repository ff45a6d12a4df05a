use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_score, hit_order, IndexError, SearchHit};
use crate::embedding::dot;

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Neighbour cap on layers above 0.
    pub m: usize,
    /// Neighbour cap on layer 0. New nodes link to up to this many
    /// neighbours there.
    pub m0: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub level_lambda: f64,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams::with_m(16)
    }
}

impl HnswParams {
    pub fn with_m(m: usize) -> Self {
        HnswParams {
            m,
            m0: 2 * m,
            ef_construction: 200,
            ef_search: 100,
            level_lambda: 1.0 / (m as f64).ln(),
            seed: 0x5EED,
        }
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        let bad = |msg: &str| Err(IndexError::InvalidParams(msg.to_string()));
        if self.m < 2 {
            return bad("m must be at least 2");
        }
        if self.m0 < self.m {
            return bad("m0 must be at least m");
        }
        if self.ef_construction < self.m {
            return bad("ef_construction must be at least m");
        }
        if self.ef_search < 1 {
            return bad("ef_search must be at least 1");
        }
        if !(self.level_lambda.is_finite() && self.level_lambda > 0.0) {
            return bad("level_lambda must be positive");
        }
        Ok(())
    }
}

/// Candidate ordered by score, ties broken toward the lower node index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    score: f32,
    node: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited {
    bits: Vec<u64>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            bits: vec![0; n.div_ceil(64)],
        }
    }

    /// Marks `node`; returns whether it was unmarked before.
    fn insert(&mut self, node: u32) -> bool {
        let (w, b) = (node as usize / 64, node as usize % 64);
        let fresh = self.bits[w] & (1 << b) == 0;
        self.bits[w] |= 1 << b;
        fresh
    }
}

/// Hierarchical navigable small-world graph over unit vectors.
///
/// Edges are kept symmetric: whenever pruning drops `b` from `a`'s list, `a`
/// is also removed from `b`'s list.
#[derive(Debug, Clone)]
pub struct HnswIndex {
    pub(super) params: HnswParams,
    pub(super) dim: usize,
    pub(super) ids: Vec<String>,
    pub(super) lookup: HashMap<String, u32>,
    pub(super) vectors: Vec<f32>,
    /// `links[node][layer]`, one list per layer the node lives on.
    pub(super) links: Vec<Vec<Vec<u32>>>,
    pub(super) entry: Option<u32>,
    pub(super) rng: ChaCha8Rng,
}

impl HnswIndex {
    pub fn new(dim: usize, params: HnswParams) -> Result<Self, IndexError> {
        params.validate()?;
        if dim == 0 {
            return Err(IndexError::InvalidParams("dimension must be positive".into()));
        }
        Ok(HnswIndex {
            params,
            dim,
            ids: Vec::new(),
            lookup: HashMap::new(),
            vectors: Vec::new(),
            links: Vec::new(),
            entry: None,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        })
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn entry_point(&self) -> Option<(&str, usize)> {
        self.entry
            .map(|e| (self.ids[e as usize].as_str(), self.links[e as usize].len() - 1))
    }

    pub fn vector(&self, node: usize) -> &[f32] {
        &self.vectors[node * self.dim..(node + 1) * self.dim]
    }

    pub fn vector_of(&self, id: &str) -> Option<&[f32]> {
        self.lookup.get(id).map(|&n| self.vector(n as usize))
    }

    /// Top layer of `node`.
    pub fn node_level(&self, node: usize) -> usize {
        self.links[node].len() - 1
    }

    pub fn neighbors(&self, node: usize, layer: usize) -> &[u32] {
        self.links[node].get(layer).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), self.vector(i)))
    }

    fn score(&self, query: &[f32], node: u32) -> f32 {
        dot(query, self.vector(node as usize))
    }

    fn random_level(&mut self) -> usize {
        let u: f64 = self.rng.random();
        let level = (-(1.0 - u).ln() * self.params.level_lambda).floor();
        (level as usize).min(MAX_LEVEL)
    }

    /// Adds `vector` under `id`. The vector is expected to be unit-norm.
    pub fn insert(&mut self, id: &str, vector: &[f32]) -> Result<(), IndexError> {
        if vector.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if self.lookup.contains_key(id) {
            return Err(IndexError::DuplicateId(id.to_string()));
        }
        let node = self.ids.len() as u32;
        let level = self.random_level();
        self.ids.push(id.to_string());
        self.lookup.insert(id.to_string(), node);
        self.vectors.extend_from_slice(vector);
        self.links.push(vec![Vec::new(); level + 1]);

        let Some(entry) = self.entry else {
            self.entry = Some(node);
            return Ok(());
        };
        let top = self.node_level(entry as usize);
        let query = vector.to_vec();
        let mut eps = vec![Scored {
            score: self.score(&query, entry),
            node: entry,
        }];
        for layer in (level + 1..=top).rev() {
            eps = self.search_layer(&query, &eps, 1, layer);
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(&query, &eps, self.params.ef_construction, layer);
            let selected = self.select_neighbors(&found, self.cap(layer));
            self.links[node as usize][layer] = selected.iter().map(|s| s.node).collect();
            for s in &selected {
                self.connect(s.node, node, layer);
            }
            eps = found;
        }
        if level > top {
            self.entry = Some(node);
        }
        Ok(())
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m0
        } else {
            self.params.m
        }
    }

    /// Adds `to` to `from`'s list, pruning `from` back to its cap.
    fn connect(&mut self, from: u32, to: u32, layer: usize) {
        self.links[from as usize][layer].push(to);
        if self.links[from as usize][layer].len() <= self.cap(layer) {
            return;
        }
        let base = self.vector(from as usize).to_vec();
        let mut candidates: Vec<Scored> = self.links[from as usize][layer]
            .iter()
            .map(|&n| Scored {
                score: self.score(&base, n),
                node: n,
            })
            .collect();
        candidates.sort_by(|a, b| b.cmp(a));
        let kept = self.select_neighbors(&candidates, self.cap(layer));
        let kept_nodes: Vec<u32> = kept.iter().map(|s| s.node).collect();
        for c in &candidates {
            if !kept_nodes.contains(&c.node) {
                self.links[c.node as usize][layer].retain(|&x| x != from);
            }
        }
        self.links[from as usize][layer] = kept_nodes;
    }

    /// Diversity heuristic: walk candidates best-first and keep one only if
    /// it is closer to the base than to every neighbour already kept; top up
    /// with the best discarded candidates if fewer than `m` survive.
    /// `candidates` must be sorted best-first.
    fn select_neighbors(&self, candidates: &[Scored], m: usize) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut discarded = Vec::new();
        for &c in candidates {
            if kept.len() >= m {
                break;
            }
            let v = self.vector(c.node as usize);
            let diverse = kept
                .iter()
                .all(|k| c.score > dot(v, self.vector(k.node as usize)));
            if diverse {
                kept.push(c);
            } else {
                discarded.push(c);
            }
        }
        for c in discarded {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    /// Beam search on one layer; returns up to `ef` nodes best-first.
    fn search_layer(&self, query: &[f32], entry: &[Scored], ef: usize, layer: usize) -> Vec<Scored> {
        let mut visited = Visited::new(self.ids.len());
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        let mut best: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        for &e in entry {
            if visited.insert(e.node) {
                candidates.push(e);
                best.push(Reverse(e));
                if best.len() > ef {
                    best.pop();
                }
            }
        }
        while let Some(c) = candidates.pop() {
            let worst = best.peek().expect("non-empty").0;
            if c.score < worst.score && best.len() >= ef {
                break;
            }
            for &n in self.neighbors(c.node as usize, layer) {
                if !visited.insert(n) {
                    continue;
                }
                let s = Scored {
                    score: self.score(query, n),
                    node: n,
                };
                if best.len() < ef || s > best.peek().expect("non-empty").0 {
                    candidates.push(s);
                    best.push(Reverse(s));
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = best.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Approximate top-`k`; `ef` overrides the configured search beam width
    /// and is raised to `k` when smaller.
    pub fn search(&self, query: &[f32], k: usize, ef: Option<usize>) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let entry = self.entry.ok_or(IndexError::Empty)?;
        let ef = ef.unwrap_or(self.params.ef_search).max(k);
        let mut eps = vec![Scored {
            score: self.score(query, entry),
            node: entry,
        }];
        for layer in (1..=self.node_level(entry as usize)).rev() {
            eps = self.search_layer(query, &eps, 1, layer);
        }
        let found = self.search_layer(query, &eps, ef, 0);
        let mut hits: Vec<SearchHit> = found
            .into_iter()
            .map(|s| SearchHit {
                id: self.ids[s.node as usize].clone(),
                score: clamp_score(s.score),
            })
            .collect();
        hits.sort_by(hit_order);
        hits.truncate(k);
        Ok(hits)
    }

    /// Checks structural invariants: degree caps, symmetric edges, no
    /// self-loops or duplicates, and layer-0 reachability from the entry.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (node, layers) in self.links.iter().enumerate() {
            for (layer, list) in layers.iter().enumerate() {
                if list.len() > self.cap(layer) {
                    return Err(format!("node {node} layer {layer}: degree {} over cap", list.len()));
                }
                let mut sorted = list.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != list.len() {
                    return Err(format!("node {node} layer {layer}: duplicate edge"));
                }
                for &n in list {
                    if n as usize == node {
                        return Err(format!("node {node} layer {layer}: self-loop"));
                    }
                    if !self.neighbors(n as usize, layer).contains(&(node as u32)) {
                        return Err(format!("edge {node}->{n} at layer {layer} has no reverse"));
                    }
                }
            }
        }
        if let Some(entry) = self.entry {
            let mut seen = Visited::new(self.len());
            let mut stack = vec![entry];
            seen.insert(entry);
            let mut reached = 1;
            while let Some(n) = stack.pop() {
                for &m in self.neighbors(n as usize, 0) {
                    if seen.insert(m) {
                        reached += 1;
                        stack.push(m);
                    }
                }
            }
            if reached != self.len() {
                return Err(format!("only {reached} of {} nodes reachable on layer 0", self.len()));
            }
        }
        Ok(())
    }
}

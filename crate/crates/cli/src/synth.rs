//! Deterministic synthetic corpora for offline end-to-end runs.
//!
//! Every theorem gets a unique random docstring, which the mock generator
//! turns into its informal statement, plus a self-retrieval benchmark: one
//! group per theorem whose only exact match is that theorem.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use mathsearch::informalize::format_informal_entry;
use mathsearch::provider::MockGenerator;
use mathsearch::{extract_links, format_corpus_entry, informalize, TheoremKind, TheoremRecord};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const NOUNS: &[&str] = &[
    "group", "ring", "field", "module", "subgroup", "ideal", "polynomial", "matrix", "determinant",
    "eigenvalue", "sequence", "series", "limit", "integral", "derivative", "measure", "topology",
    "metric", "norm", "lattice", "filter", "sheaf", "category", "functor", "morphism", "graph",
    "tree", "prime", "divisor", "quotient", "kernel", "image", "basis", "dimension", "manifold",
    "homotopy", "ordinal", "cardinal", "permutation", "partition", "simplex", "polytope", "valuation",
    "character", "representation", "algebra", "monoid", "semiring", "torsor", "bundle",
];

const ADJECTIVES: &[&str] = &[
    "finite", "compact", "bounded", "monotone", "continuous", "injective", "surjective", "bijective",
    "abelian", "cyclic", "normal", "maximal", "minimal", "separable", "complete", "connected",
    "convex", "measurable", "integrable", "nilpotent", "solvable", "irreducible", "noetherian",
    "artinian", "reduced", "flat", "projective", "dense", "open", "closed", "discrete", "regular",
    "positive", "nonzero", "invertible", "symmetric", "orthogonal", "unitary", "smooth", "analytic",
];

const VERBS: &[&str] = &[
    "divides", "converges to", "is contained in", "equals", "bounds", "generates", "annihilates",
    "factors through", "commutes with", "is isomorphic to", "dominates", "refines", "extends",
    "preserves", "splits", "covers", "lifts to", "embeds into", "approximates", "stabilizes",
];

const STRUCTURES: &[&str] = &["Group", "CommRing", "Field", "Lattice", "MetricSpace", "TopologicalSpace", "Monoid"];

/// Number of auxiliary definitions theorem statements link to.
const DEFINITIONS: usize = 20;

pub struct SynthCorpus {
    /// Definitions first, then theorems.
    pub records: Vec<TheoremRecord>,
    pub theorems: Vec<SynthTheorem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTheorem {
    pub id: String,
    pub docstring: String,
    /// Bilingual document text the theorem gets under the mock generator.
    pub document: String,
    /// Informal-only rendering, `name: statement`.
    pub informal: String,
}

fn phrase(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {}",
        ADJECTIVES.choose(rng).expect("nonempty"),
        NOUNS.choose(rng).expect("nonempty")
    )
}

fn docstring(rng: &mut ChaCha8Rng) -> String {
    let clauses = rng.random_range(2..=3);
    let mut parts = Vec::new();
    for _ in 0..clauses {
        parts.push(format!(
            "every {} {} a {}",
            phrase(rng),
            VERBS.choose(rng).expect("nonempty"),
            phrase(rng)
        ));
    }
    let mut s = format!("If {}, then {}", parts[0], parts[1..].join(" and "));
    s.push('.');
    s
}

fn record(id: String, kind: TheoremKind, markup: &str, docstring: Option<String>, path: String) -> TheoremRecord {
    let (linked, _) = extract_links(markup);
    TheoremRecord {
        name: id.clone(),
        id,
        kind,
        formal_statement: linked.plain_text,
        links: linked.links,
        docstring,
        dependencies: Vec::new(),
        source_path: path,
    }
}

/// Builds `n` theorems (and a fixed set of definitions) from `seed`.
pub fn generate(n: usize, seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n + DEFINITIONS);
    let mut defs = Vec::with_capacity(DEFINITIONS);
    for d in 0..DEFINITIONS {
        let name = format!("Synth.Prop{d}");
        let doc = format!("The {} property of a {}.", ADJECTIVES[d % ADJECTIVES.len()], NOUNS[d % NOUNS.len()]);
        let stmt = format!("def {name} {{α : Type*}} (x : α) : Prop");
        records.push(record(name.clone(), TheoremKind::Definition, &stmt, Some(doc), "Synth/Defs.lean".into()));
        defs.push(name);
    }
    let mut theorems = Vec::with_capacity(n);
    for i in 0..n {
        let noun = NOUNS.choose(&mut rng).expect("nonempty");
        let adj = ADJECTIVES.choose(&mut rng).expect("nonempty");
        let id = format!("Synth.{adj}_{noun}_{i}");
        let structure = STRUCTURES.choose(&mut rng).expect("nonempty");
        let p = defs.choose(&mut rng).expect("nonempty");
        let q = defs.choose(&mut rng).expect("nonempty");
        let markup = format!(
            "theorem {id} {{α : Type*}} [{structure} α] (x y : α) (h : [{p}]({p}) x) : [{q}]({q}) (x * y) ∧ x ≠ y"
        );
        let doc = docstring(&mut rng);
        let r = record(id.clone(), TheoremKind::Theorem, &markup, Some(doc.clone()), format!("Synth/Part{}.lean", i / 100));
        let pair = informalize(&r, &MockGenerator).expect("mock generator answers informalization prompts");
        theorems.push(SynthTheorem {
            id,
            docstring: doc,
            document: format_corpus_entry(&r, &pair).expect("pair built from this record"),
            informal: format_informal_entry(&pair),
        });
        records.push(r);
    }
    SynthCorpus { records, theorems }
}

impl SynthCorpus {
    pub fn write_corpus(&self, path: &Path) -> anyhow::Result<()> {
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        );
        for r in &self.records {
            writeln!(out, "{}", r.to_line())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Self-retrieval benchmark: per theorem, a Lean 4 term query that is its
    /// bilingual document text and a natural-description query that is its
    /// informal rendering, both as produced by the mock generator.
    pub fn benchmark_json(&self) -> serde_json::Value {
        let groups: Vec<_> = self
            .theorems
            .iter()
            .map(|t| {
                json!({
                    "group_id": t.id,
                    "queries": [
                        {"text": t.informal, "category": "natural_description"},
                        {"text": t.document, "category": "lean4_term"},
                    ],
                    "labels": [{"theorem_id": t.id, "label": 2}],
                })
            })
            .collect();
        json!({ "groups": groups })
    }

    pub fn write_benchmark(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(&self.benchmark_json())?;
        std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        let a = generate(50, 3);
        let b = generate(50, 3);
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 50 + DEFINITIONS);
        for r in &a.records {
            r.validate().unwrap();
        }
        let theorem = &a.records[DEFINITIONS];
        assert_eq!(theorem.links.len(), 2);
        assert!(!theorem.formal_statement.contains("]("));
        let docs: std::collections::HashSet<_> = a.theorems.iter().map(|t| &t.docstring).collect();
        assert_eq!(docs.len(), 50);
    }

    #[test]
    fn benchmark_parses() {
        let s = generate(10, 1);
        let groups = mathsearch::benchmark::parse_benchmark(&s.benchmark_json().to_string()).unwrap();
        assert_eq!(groups.len(), 10);
        assert_eq!(groups[0].labels.len(), 1);
    }
}

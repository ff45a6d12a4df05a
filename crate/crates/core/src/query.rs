//! Query augmentation and the end-to-end search path.
//!
//! A raw query is optionally expanded by a text generator into a formal
//! statement, an informal name and a precise informal statement, formatted
//! like a corpus document, wrapped in the query-side instruction, embedded,
//! and looked up in the index.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::corpus::{Corpus, TheoremRecord};
use crate::embedding::{embed_batch, EmbedError, EmbedOptions, PresetPair, DEFAULT_TRUNCATE_CHARS};
use crate::index::{HnswIndex, IndexError};
use crate::informalize::{labeled_fields, sanitize_name, InformalPair};
use crate::provider::{Embedder, GenerationRequest, TextGenerator};

pub const AUGMENT_TEMPLATE_VERSION: &str = "augment-v1";

pub(crate) const AUGMENT_DIRECTIVE_MARKER: &str = "Answer with exactly three lines and nothing else:";

const AUGMENT_PREAMBLE: &str = "You rewrite short, possibly vague search queries into precise \
mathematical statements for a search engine over the Lean 4 library mathlib4. Follow these \
principles:
1. Precision: state one complete mathematical claim with every hypothesis and the conclusion made explicit.
2. LaTeX: write every mathematical expression in LaTeX, delimited by \\( and \\).
3. Disambiguation: when the query is ambiguous or only names a result, commit to its most standard mathematical reading and spell that reading out.
4. Equivalence: the rewritten statement must be mathematically equivalent to what the query asks for; do not strengthen, weaken or generalize it.
5. Also give a formal statement in Lean 4 using mathlib4 naming conventions.

Examples:

Query: If p implies q, then not q implies not p.
FORMAL: theorem mt {a b : Prop} (h₁ : a → b) (h₂ : ¬b) : ¬a
NAME: Contrapositive of an implication
STATEMENT: For propositions \\(p\\) and \\(q\\), if \\(p \\rightarrow q\\) and \\(\\neg q\\) hold, then \\(\\neg p\\) holds.

Query: If there exist injective maps of sets from A to B and from B to A, then there exists a bijective map between A and B.
FORMAL: theorem Function.Embedding.schroeder_bernstein {α : Type u} {β : Type v} {f : α → β} {g : β → α} (hf : Function.Injective f) (hg : Function.Injective g) : ∃ h : α → β, Function.Bijective h
NAME: Cantor-Bernstein theorem for injections
STATEMENT: For sets \\(A\\) and \\(B\\), if there exist injective functions \\(f : A \\to B\\) and \\(g : B \\to A\\), then there exists a bijective function \\(h : A \\to B\\).

Now rewrite the following query.
";

/// Prompt asking a generator to expand `query`; the query occupies the final
/// slot before the output directive.
pub fn build_augmentation_prompt(query: &str) -> String {
    let mut p = String::with_capacity(AUGMENT_PREAMBLE.len() + query.len() + 256);
    p.push_str(AUGMENT_PREAMBLE);
    p.push_str("Query: ");
    p.push_str(query);
    p.push_str("\n\n");
    p.push_str(AUGMENT_DIRECTIVE_MARKER);
    p.push_str("\nFORMAL: <Lean 4 formal statement>\nNAME: <short name of the result>\nSTATEMENT: <precise natural-language statement with LaTeX>\n");
    p
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AugmentedQuery {
    pub original: String,
    pub formal_statement: String,
    pub informal_name: String,
    pub informal_statement: String,
    pub augmented: bool,
}

impl AugmentedQuery {
    pub fn fallback(query: &str) -> Self {
        AugmentedQuery {
            original: query.to_string(),
            formal_statement: String::new(),
            informal_name: String::new(),
            informal_statement: query.to_string(),
            augmented: false,
        }
    }
}

fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    match t.strip_prefix("```") {
        Some(rest) => {
            let rest = rest.split_once('\n').map_or("", |(_, body)| body);
            rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
        }
        None => t,
    }
}

/// Parses `FORMAL:` / `NAME:` / `STATEMENT:` fields; `None` if any is
/// missing or empty.
pub fn parse_augmentation(text: &str) -> Option<(String, String, String)> {
    let fields = labeled_fields(text, &["FORMAL", "NAME", "STATEMENT"]);
    let formal = strip_fences(fields.get("FORMAL")?).to_string();
    let name = sanitize_name(fields.get("NAME")?);
    let statement = fields.get("STATEMENT")?.trim().to_string();
    if formal.is_empty() || name.is_empty() || statement.is_empty() {
        return None;
    }
    Some((formal, name, statement))
}

/// Expands `query` with `provider`. Never fails: any provider or format
/// problem yields [`AugmentedQuery::fallback`].
pub fn augment_query(query: &str, provider: &dyn TextGenerator) -> AugmentedQuery {
    let request = GenerationRequest::new(build_augmentation_prompt(query));
    match provider.generate(&request) {
        Ok(text) => match parse_augmentation(&text) {
            Some((formal, name, statement)) => AugmentedQuery {
                original: query.to_string(),
                formal_statement: formal,
                informal_name: name,
                informal_statement: statement,
                augmented: true,
            },
            None => {
                tracing::warn!(provider = provider.id(), "augmentation response unparseable; using raw query");
                AugmentedQuery::fallback(query)
            }
        },
        Err(e) => {
            tracing::warn!(provider = provider.id(), error = %e, "augmentation failed; using raw query");
            AugmentedQuery::fallback(query)
        }
    }
}

/// Renders an augmented query exactly like a bilingual corpus document; a
/// fallback query is passed through unchanged.
pub fn format_query_document(aq: &AugmentedQuery) -> String {
    if aq.augmented {
        format!("{}\n{}:{}", aq.formal_statement, aq.informal_name, aq.informal_statement)
    } else {
        aq.original.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub rank: usize,
    pub theorem: TheoremRecord,
    pub informal: Option<InformalPair>,
    pub score: f32,
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub k: usize,
    pub augment: bool,
    pub ef: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            k: 20,
            augment: true,
            ef: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub results: Vec<SearchResult>,
    /// Present whenever augmentation was attempted, including fallbacks.
    pub augmented: Option<AugmentedQuery>,
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("index refers to `{0}`, which is not in the corpus")]
    UnknownId(String),
}

/// Everything needed to answer queries. Immutable once built, so one engine
/// can serve concurrent searches.
pub struct SearchEngine {
    corpus: Arc<Corpus>,
    pairs: HashMap<String, InformalPair>,
    index: Arc<HnswIndex>,
    embedder: Arc<dyn Embedder>,
    augmenter: Option<Arc<dyn TextGenerator>>,
    presets: PresetPair,
    instruct_queries: bool,
    truncate_limit: usize,
}

impl SearchEngine {
    /// Fails with [`SearchError::UnknownId`] if any indexed id is missing from
    /// the corpus.
    pub fn new(
        corpus: Arc<Corpus>,
        pairs: impl IntoIterator<Item = InformalPair>,
        index: Arc<HnswIndex>,
        embedder: Arc<dyn Embedder>,
        presets: PresetPair,
    ) -> Result<Self, SearchError> {
        if let Some(missing) = index.ids().iter().find(|id| corpus.get(id).is_none()) {
            return Err(SearchError::UnknownId(missing.clone()));
        }
        Ok(SearchEngine {
            corpus,
            pairs: pairs.into_iter().map(|p| (p.theorem_id.clone(), p)).collect(),
            index,
            embedder,
            augmenter: None,
            presets,
            instruct_queries: true,
            truncate_limit: DEFAULT_TRUNCATE_CHARS,
        })
    }

    pub fn with_augmenter(mut self, augmenter: Arc<dyn TextGenerator>) -> Self {
        self.augmenter = Some(augmenter);
        self
    }

    /// Whether the query-side instruction wraps queries (default `true`).
    pub fn with_query_instruction(mut self, on: bool) -> Self {
        self.instruct_queries = on;
        self
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn index(&self) -> &HnswIndex {
        &self.index
    }

    pub fn presets(&self) -> &PresetPair {
        &self.presets
    }

    pub fn informal(&self, id: &str) -> Option<&InformalPair> {
        self.pairs.get(id)
    }

    pub fn run_search(&self, query: &str, opts: &SearchOptions) -> Result<SearchOutcome, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        let augmented = match (&self.augmenter, opts.augment) {
            (Some(provider), true) => Some(augment_query(query, provider.as_ref())),
            _ => None,
        };
        let text = match &augmented {
            Some(aq) => format_query_document(aq),
            None => query.to_string(),
        };
        let none;
        let preset = if self.instruct_queries {
            &self.presets.query
        } else {
            none = PresetPair::named("none").expect("built-in preset");
            &none.query
        };
        let embed_opts = EmbedOptions {
            concurrency: 1,
            truncate_limit: self.truncate_limit,
            ..EmbedOptions::default()
        };
        let vector = embed_batch(&[text.as_str()], preset, self.embedder.as_ref(), None, &embed_opts)?
            .pop()
            .expect("one input, one vector");
        let hits = self.index.search(&vector.values, opts.k, opts.ef)?;
        let results = hits
            .into_iter()
            .enumerate()
            .map(|(i, hit)| {
                let theorem = self
                    .corpus
                    .get(&hit.id)
                    .ok_or_else(|| SearchError::UnknownId(hit.id.clone()))?
                    .clone();
                Ok(SearchResult {
                    rank: i + 1,
                    informal: self.pairs.get(&hit.id).cloned(),
                    theorem,
                    score: hit.score,
                })
            })
            .collect::<Result<Vec<_>, SearchError>>()?;
        Ok(SearchOutcome { results, augmented })
    }
}

impl crate::benchmark::RankingEngine for SearchEngine {
    fn rank(&self, query: &str, depth: usize) -> Result<Vec<String>, crate::benchmark::EngineError> {
        let opts = SearchOptions {
            k: depth,
            ..SearchOptions::default()
        };
        let outcome = self.run_search(query, &opts)?;
        Ok(outcome.results.into_iter().map(|r| r.theorem.id).collect())
    }
}

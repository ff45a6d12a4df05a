//! Semantic search over formal theorem libraries.
//!
//! The pipeline turns a library export into bilingual documents (formal
//! statement plus a generated informal name and statement), embeds them with
//! task instructions, and serves cosine nearest-neighbour queries from an HNSW
//! graph. The [`benchmark`] module scores any engine against labeled query
//! groups.

pub mod benchmark;
pub mod corpus;
pub mod embedding;
pub mod hash;
pub mod index;
pub mod informalize;
pub mod provider;
pub mod query;

pub use benchmark::{
    evaluate, load_benchmark, Bm25Index, Bm25Params, EvalConfig, IdcgMode, MetricsReport,
    QueryCategory, QueryGroup, RankingEngine,
};
pub use corpus::{
    extract_links, parse_corpus, resolve_dependencies, Corpus, DefRecord, Diagnostic,
    LinkedStatement, TheoremKind, TheoremRecord,
};
pub use embedding::{
    apply_instruction, mock_embed, normalize, truncate_chars, EmbeddingCache, EmbeddingVector,
    InstructionPreset, PresetPair, Side,
};
pub use index::{brute_force_search, recall_at_k, HnswIndex, HnswParams, SearchHit};
pub use informalize::{document_text, format_corpus_entry, informalize, parse_generation, InformalPair};
pub use provider::{Embedder, GenerationRequest, ProviderError, TextGenerator};
pub use query::{AugmentedQuery, SearchEngine, SearchOptions, SearchResult};

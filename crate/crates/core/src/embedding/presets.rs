//! Task-instruction presets for instruction-tuned embedding models.
//!
//! Instructed inputs follow `Instruct: {task}\nQuery:{text}` on the query side
//! and `Instruct: {task}\nDoc:{text}` on the document side.

use serde::{Deserialize, Serialize};

const PLACEHOLDER: &str = "{text}";

pub const DEFAULT_PRESET: &str = "bilingual";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Query,
    Doc,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("template must contain exactly one `{{text}}` placeholder, found {0}")]
pub struct PresetError(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionPreset {
    pub preset_id: String,
    pub side: Side,
    template: String,
    split: usize,
}

impl InstructionPreset {
    pub fn new(
        preset_id: impl Into<String>,
        side: Side,
        template: impl Into<String>,
    ) -> Result<Self, PresetError> {
        let template = template.into();
        let count = template.matches(PLACEHOLDER).count();
        if count != 1 {
            return Err(PresetError(count));
        }
        let split = template.find(PLACEHOLDER).expect("one placeholder");
        Ok(InstructionPreset {
            preset_id: preset_id.into(),
            side,
            template,
            split,
        })
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// Text before and after the placeholder.
    pub fn parts(&self) -> (&str, &str) {
        (
            &self.template[..self.split],
            &self.template[self.split + PLACEHOLDER.len()..],
        )
    }
}

/// Which rendering of a theorem goes into the document-side embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocFormat {
    /// `formal\nname:statement`
    Bilingual,
    /// The formal statement alone.
    Formal,
    /// `name: statement`
    Informal,
}

/// A query-side and document-side preset used together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresetPair {
    pub name: &'static str,
    pub query: InstructionPreset,
    pub doc: InstructionPreset,
    pub doc_format: DocFormat,
}

const BILINGUAL_EQUIVALENT: &str = "Retrieve math theorems stated in bilingual Lean 4 + natural language that are mathematically equivalent to the given one";

/// `(name, query task, doc task, document format)`; an empty task means no
/// instruction at all.
const PAIRS: &[(&str, &str, &str, DocFormat)] = &[
    (DEFAULT_PRESET, BILINGUAL_EQUIVALENT, BILINGUAL_EQUIVALENT, DocFormat::Bilingual),
    (
        "formal-baseline",
        "Given a math search query, retrieve theorems stated in Lean 4 that mathematically match the query",
        "Represent the given formal math statement written in Lean 4 for retrieving related statement by natural language query",
        DocFormat::Formal,
    ),
    (
        "informal-unaugmented",
        "Given a math search query, retrieve theorems mathematically equivalent to the query",
        "Represent the given math theorem statement for retrieving related statement by natural language query",
        DocFormat::Informal,
    ),
    (
        "bilingual-unaugmented",
        "Given a math search query, retrieve theorems stated in bilingual Lean 4 + natural language that mathematically match the query",
        "Represent the given formal math statement written in Lean 4 concatenated with its natural language explanation for retrieving related statement by natural language query",
        DocFormat::Bilingual,
    ),
    (
        "formal",
        "Retrieve math theorems stated in Lean 4 that are mathematically equivalent to the given one",
        "Retrieve math theorems stated in Lean 4 that are mathematically equivalent to the given one",
        DocFormat::Formal,
    ),
    (
        "informal",
        "Retrieve math theorems that are mathematically equivalent to the given one",
        "Retrieve math theorems that are mathematically equivalent to the given one",
        DocFormat::Informal,
    ),
    ("none", "", "", DocFormat::Bilingual),
];

fn instructed(task: &str, side: Side) -> String {
    if task.is_empty() {
        return PLACEHOLDER.to_string();
    }
    let label = match side {
        Side::Query => "Query",
        Side::Doc => "Doc",
    };
    format!("Instruct: {task}\n{label}:{PLACEHOLDER}")
}

impl PresetPair {
    pub fn names() -> impl Iterator<Item = &'static str> {
        PAIRS.iter().map(|p| p.0)
    }

    pub fn named(name: &str) -> Option<PresetPair> {
        let &(name, query, doc, doc_format) = PAIRS.iter().find(|p| p.0 == name)?;
        let make = |task, side, suffix| {
            InstructionPreset::new(format!("{name}:{suffix}"), side, instructed(task, side))
                .expect("built-in templates have one placeholder")
        };
        Some(PresetPair {
            name,
            query: make(query, Side::Query, "query"),
            doc: make(doc, Side::Doc, "doc"),
            doc_format,
        })
    }

    pub fn default_pair() -> PresetPair {
        PresetPair::named(DEFAULT_PRESET).expect("default preset exists")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::apply_instruction;

    #[test]
    fn placeholder_count_is_enforced() {
        assert_eq!(InstructionPreset::new("x", Side::Doc, "no slot"), Err(PresetError(0)));
        assert_eq!(
            InstructionPreset::new("x", Side::Doc, "{text}{text}"),
            Err(PresetError(2))
        );
    }

    #[test]
    fn text_containing_placeholder_is_inserted_verbatim() {
        let p = InstructionPreset::new("x", Side::Doc, "a{text}b").unwrap();
        assert_eq!(apply_instruction(&p, "{text}"), "a{text}b");
    }

    #[test]
    fn every_named_pair_resolves() {
        for name in PresetPair::names() {
            let pair = PresetPair::named(name).unwrap();
            assert_eq!(pair.query.side, Side::Query);
            assert_eq!(pair.doc.side, Side::Doc);
        }
        assert!(PresetPair::named("nope").is_none());
    }

    #[test]
    fn empty_instruction_is_identity() {
        let pair = PresetPair::named("none").unwrap();
        assert_eq!(apply_instruction(&pair.query, "T"), "T");
        assert_eq!(apply_instruction(&pair.doc, "T"), "T");
    }
}
